#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "posefit/bbox.hpp"
#include "posefit/camera.hpp"
#include "posefit/posemaps.hpp"
#include "posefit/skeleton.hpp"

namespace posefit {

// theta_j(t) = base_j + amplitude * sin(2 pi frequency t + phase)
struct JointSinusoid {
  Vec3 amplitude_rad = Vec3::Zero();
  double frequency_hz = 0.0;
  double phase_rad = 0.0;
};

enum class RootPathKind { fixed, linear, circle };

/// Root trajectory in camera space. A circle runs in the x-z plane around
/// `origin`, starting at origin - radius * z_hat and closing after period_s.
struct RootPath {
  RootPathKind kind = RootPathKind::fixed;
  Vec3 origin = Vec3(0.0, 0.0, 4000.0);
  Vec3 velocity_mm_s = Vec3::Zero();
  double radius_mm = 0.0;
  double period_s = 1.0;

  Vec3 at(double t) const;
};

struct MotionSpec {
  Eigen::VectorXd base_theta;          // 3J; empty means rest pose
  std::vector<JointSinusoid> sinusoids;  // J entries or empty
  RootPath root;
  int frames = 300;
  double fps = 30.0;
  double fov_deg = kDefaultVerticalFovDeg;
  ImageSize image{1280, 720};
};

struct NoiseSpec {
  double kp_jitter_sigma_px = 0.0;
  double depth_noise_sigma_mm = 0.0;
  double outlier_prob = 0.0;
  double outlier_shift_px = 40.0;
  double bb_jitter_px = 0.0;
  // Scale of a random per-joint offset added to location-map cells outside
  // the true joint's heatmap support. A trained network's location-maps are
  // only supervised near the joint, so a misplaced keypoint reads garbage.
  double offpeak_bias_mm = 0.0;
  std::uint64_t seed = 1;

  void validate() const;
};

// Noisy network emulation used by the ablation checks and the benchmark:
// 5 px keypoint jitter, 5% misfires moved by 80 px, 20 mm location-map noise
// and a 100 mm off-peak bias.
NoiseSpec reference_noise(std::uint64_t seed = 1);

struct GtFrame {
  int index = 0;
  double timestamp_s = 0.0;
  Pose pose;
  Points3 joints;  // camera space
};

struct GeneratedSequence {
  CameraModel camera;
  std::vector<GtFrame> frames;
};

// Deterministic; throws ContractError when a joint falls behind the camera.
GeneratedSequence generate(const MotionSpec& spec, const Skeleton& skeleton);

// Walking-in-place at an unhurried pace (0.6 Hz leg and arm swing) from an
// A-pose base, with the whole body kept inside a 368 px crop at 4 m.
MotionSpec default_motion(const Skeleton& skeleton, int frames = 300);

struct ObserveSettings {
  GridSpec grid;
  double sigma_cells = kDefaultHeatmapSigmaCells;
  BoxTrackerParams box;
};

struct Observation {
  MapStack maps;
  CropTransform crop;             // of the (possibly jittered) box the maps were rendered in
  Keypoints2D gt_keypoints_crop;  // noise-free
  Keypoints2D gt_keypoints_frame;
};

/// Emulates the network on one frame: projects the GT joints, maps them into
/// the (jittered) crop, renders ground-truth maps at the noisy peak locations
/// and corrupts the location-map values.
Observation observe(const GtFrame& frame, const Skeleton& skeleton, const CameraModel& camera,
                    const BoundingBox& box, const NoiseSpec& noise,
                    const ObserveSettings& settings = {});

Keypoints2D project_keypoints(const Points3& joints, const CameraModel& camera);

/// Closed loop of oracle and box tracker: frame 0 is boxed from the GT
/// keypoints, later frames from the previous frame's decoded keypoints.
using ObservationSink = std::function<void(const GtFrame&, const Observation&)>;
void simulate(const GeneratedSequence& sequence, const Skeleton& skeleton, const NoiseSpec& noise,
              const ObserveSettings& settings, const ObservationSink& sink);

/// Noise streams: std::mt19937_64 seeded per (seed, frame, stream) through a
/// SplitMix64 mix; streams 0..J-1 belong to joints, stream J to the box.
/// Normals use Box-Muller on 53-bit uniforms so output is portable.
inline constexpr const char* kRngName = "mt19937_64/splitmix64-streams/box-muller";

class NoiseStream {
 public:
  NoiseStream(std::uint64_t seed, std::uint64_t frame, std::uint64_t stream);
  double uniform();  // [0, 1)
  double normal();
 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace posefit
