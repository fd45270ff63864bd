#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "posefit/bbox.hpp"
#include "posefit/camera.hpp"
#include "posefit/one_euro.hpp"
#include "posefit/posemaps.hpp"
#include "posefit/skeleton.hpp"

namespace posefit {

struct EnergyWeights {
  double w_ik = 1.0;
  double w_proj = 44.0;
  double w_smooth = 0.07;
  double w_depth = 0.11;

  void validate() const;
};

enum class JacobianMode { analytic, numeric };

struct SolverOptions {
  int max_iterations = 50;
  double gradient_tolerance = 1e-6;
  double step_tolerance = 1e-8;      // relative to |x|
  double function_tolerance = 1e-6;  // relative energy decrease of an accepted step
  double initial_lambda = 1e-3;
  double lambda_factor = 10.0;
  double max_lambda = 1e12;
  JacobianMode jacobian = JacobianMode::analytic;
  double numeric_step = 1e-6;
  // Depth clamp applied to projections during residual evaluation.
  double min_depth_mm = 1.0;
};

/// Per-frame fitting inputs besides the observations. The temporal terms use
/// the fitted camera-space joint positions of the previous two frames.
struct FitContext {
  const Skeleton& skeleton;
  CameraModel camera;
  std::optional<Points3> previous;         // t - 1
  std::optional<Points3> before_previous;  // t - 2
  double frame_interval_s = 1.0 / 30.0;
};

struct Observations {
  Keypoints2D keypoints;        // full-frame pixels
  LocalPose3D local;            // retargeted root-relative 3D
  std::vector<bool> local_valid;
};

struct EnergyTerms {
  double ik = 0.0;
  double proj = 0.0;
  double smooth = 0.0;
  double depth = 0.0;
  double total() const { return ik + proj + smooth + depth; }
};

struct EnergyEvaluation {
  EnergyTerms terms;
  Eigen::VectorXd residuals;
  bool behind_camera = false;
};

inline constexpr int kMinVisibleJoints = 4;

/// Weighted residuals of the four fitting terms at `pose`:
///   IK     sqrt(w_ik)     * ((FK - d) - P_local)     3 rows per valid joint
///   proj   sqrt(w_proj)   * (project(FK) - K)        2 rows per visible joint
///   smooth sqrt(w_smooth) * (p_t - 2 p_t-1 + p_t-2)  3 rows per joint, needs two frames of history
///   depth  sqrt(w_depth)  * (z_t - z_t-1)            1 row per joint, needs one frame
/// The temporal rows are expressed per 1/30 s frame; other frame intervals
/// are rescaled to that reference.
EnergyEvaluation energy(const Pose& pose, const Observations& obs, const EnergyWeights& weights,
                        const FitContext& ctx, double min_depth_mm = 1.0);

struct FitResult {
  Pose pose;
  EnergyTerms terms;
  int iterations = 0;
  bool converged = false;
  bool rejected = false;       // too few visible joints, init carried forward
  bool diverged = false;       // no descent step found before lambda cap
  bool behind_camera = false;  // a projection needed depth clamping
  std::vector<double> energy_trace;  // accepted energies, starting at init

  bool flagged() const { return rejected || diverged || behind_camera; }
};

// Damped least squares (Levenberg-Marquardt) over (theta, d).
FitResult fit_frame(const Observations& obs, const EnergyWeights& weights, const FitContext& ctx,
                    const Pose& init, const SolverOptions& options = {});

// Residual Jacobian with respect to (theta, d), either mode.
Eigen::MatrixXd energy_jacobian(const Pose& pose, const Observations& obs,
                                const EnergyWeights& weights, const FitContext& ctx,
                                JacobianMode mode, const SolverOptions& options = {});

struct RetargetResult {
  LocalPose3D local;
  std::vector<bool> valid;
  std::vector<bool> substituted;  // zero-length or orphaned bone replaced by its rest direction
};

/// Keeps each predicted bone direction and replaces its length with the
/// skeleton's, walking the tree from the root.
RetargetResult retarget(const LocalPose3D& local, const std::vector<bool>& valid,
                        const Skeleton& skeleton);
LocalPose3D retarget(const LocalPose3D& local, const Skeleton& skeleton);

struct TrackerConfig {
  EnergyWeights weights;
  SolverOptions solver;
  OneEuroParams keypoint_filter = default_params(FilterStage::keypoints);
  OneEuroParams local_filter = default_params(FilterStage::local3d);
  OneEuroParams global_filter = default_params(FilterStage::global3d);
  bool enable_filters = true;
  // Log-parabola peak refinement of the decoded keypoints.
  bool subcell_refinement = true;
  // Replace predicted 2D with ground truth for the location-map lookup and
  // the projection term.
  bool gt_2d_lookup = false;
  // Depth of the rest-pose initialization on the root keypoint's ray.
  double nominal_depth_mm = 4000.0;
  double frame_rate_hz = 30.0;
};

struct FrameInput {
  const MapStack& maps;
  CropTransform crop;
  std::optional<double> timestamp_s;
  std::optional<Keypoints2D> gt_keypoints_frame;
};

struct StageTimings {
  double decode_ms = 0.0;
  double filter_ms = 0.0;
  double retarget_ms = 0.0;
  double fit_ms = 0.0;
};

struct FrameOutput {
  int frame = 0;
  double timestamp_s = 0.0;
  Pose pose;                  // fitted pose
  Points3 global_positions;   // filtered camera-space joints
  LocalPose3D local;          // filtered, root-relative
  LocalPose3D raw_local;      // per-frame decode, no fitting
  Keypoints2D raw_keypoints;  // decoded, full-frame
  FitResult fit;
  StageTimings timings;
};

/// Per-stream pipeline: decode, keypoint filter, location-map lookup at the
/// filtered keypoints, root-relative filter, retarget, fit, global filter.
/// Must be fed one frame at a time in order.
class SequenceTracker {
 public:
  SequenceTracker(Skeleton skeleton, CameraModel camera, TrackerConfig config);

  FrameOutput process(const FrameInput& input);
  const Skeleton& skeleton() const { return skeleton_; }
  const TrackerConfig& config() const { return config_; }

 private:
  Skeleton skeleton_;
  CameraModel camera_;
  TrackerConfig config_;
  OneEuroFilter keypoint_filter_;
  OneEuroFilter local_filter_;
  OneEuroFilter global_filter_;
  std::optional<Pose> last_pose_;
  std::optional<Points3> previous_;
  std::optional<Points3> before_previous_;
  int frame_ = 0;
};

std::vector<FrameOutput> track_sequence(const std::vector<FrameInput>& frames, const Skeleton& skeleton,
                                        const CameraModel& camera, const TrackerConfig& config);

}  // namespace posefit
