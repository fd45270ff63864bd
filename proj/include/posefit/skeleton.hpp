#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace posefit {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Points2 = std::vector<Vec2>;
using Points3 = std::vector<Vec3>;

inline constexpr int kNoParent = -1;

// Height-normalized predictions use a knee-to-neck height of 920 mm.
inline constexpr double kNormalizedKneeNeckMm = 920.0;

struct JointSpec {
  std::string name;
  int parent = kNoParent;
  double bone_length_mm = 0.0;
  Vec3 rest_direction = Vec3::Zero();
};

/// Kinematic skeleton: a joint tree rooted at the pelvis.
///
/// Bone j runs from parent(j) to j. Its rest direction is expressed in the
/// parent's frame, so with all rotations at zero the bone points along
/// rest_direction(j) in camera space (x right, y down, z forward).
class Skeleton {
 public:
  explicit Skeleton(std::vector<JointSpec> joints);

  int joint_count() const { return static_cast<int>(joints_.size()); }
  int root() const { return root_; }
  int parent(int j) const { return joints_[j].parent; }
  double bone_length(int j) const { return joints_[j].bone_length_mm; }
  const Vec3& rest_direction(int j) const { return joints_[j].rest_direction; }
  const std::string& name(int j) const { return joints_[j].name; }
  const std::vector<JointSpec>& joints() const { return joints_; }

  // Joints ordered so every parent precedes its children.
  const std::vector<int>& topological_order() const { return order_; }
  const std::vector<int>& children(int j) const { return children_[j]; }

  // Throws ContractError when the name is unknown.
  int index_of(std::string_view name) const;
  bool is_ancestor(int ancestor, int j) const;

  Skeleton with_bone_lengths(const std::vector<double>& lengths) const;
  Skeleton scaled(double factor) const;

  // Vertical (y) extent of the rest pose, head to toe.
  double rest_height() const;
  // Vertical distance from the neck to the mean of the knees in rest pose.
  double knee_neck_height() const;
  // Joint positions of the rest pose relative to the root.
  Points3 rest_positions() const;

 private:
  std::vector<JointSpec> joints_;
  std::vector<std::vector<int>> children_;
  std::vector<int> order_;
  int root_ = 0;
};

/// Joint angles (3 exponential-map parameters per joint, radians) plus the
/// root translation in camera space (mm).
struct Pose {
  Eigen::VectorXd theta;
  Vec3 d = Vec3::Zero();

  static Pose zero(int joint_count);
  bool is_finite() const;
};

/// Root-relative joint positions (mm); positions[root] is the origin.
struct LocalPose3D {
  Points3 positions;
};

// The default 21-joint topology with bone lengths of a ~1.7 m adult.
Skeleton default_skeleton();

// The 14 joints used for 3D PCK / MPJPE: head, neck, shoulders, elbows,
// wrists, hips, knees and ankles.
std::vector<int> evaluation_joints(const Skeleton& skeleton);

Mat3 exp_so3(const Vec3& w);
// Right Jacobian of SO(3): d Exp(w + dw) = Exp(w) Exp(Jr(w) dw) to first order.
Mat3 right_jacobian_so3(const Vec3& w);

Points3 forward_kinematics(const Skeleton& skeleton, const Pose& pose);

// Camera-space joint positions plus d(positions)/d(theta, d) as a
// (3J) x (3J + 3) matrix; the last three columns belong to d.
Points3 forward_kinematics(const Skeleton& skeleton, const Pose& pose,
                           Eigen::MatrixXd& jacobian);

LocalPose3D local_pose_from_global(const Skeleton& skeleton, const Pose& pose);
LocalPose3D to_local(const Skeleton& skeleton, const Points3& global_positions);

/// Skeleton with the template's topology and rest directions whose bone
/// lengths are the per-bone mean over the predictions, uniformly rescaled so
/// that the rest height equals user_height_mm.
Skeleton calibrate(const Skeleton& topology,
                   const std::vector<LocalPose3D>& predictions,
                   double user_height_mm);

// Skeleton definition files are JSON objects keyed by joint name, in index
// order: {"pelvis": {"parent": null, "length_mm": 0, "rest_direction": [0,0,0]}, ...}
Skeleton load_skeleton(const std::filesystem::path& path);
Skeleton skeleton_from_json_text(const std::string& text);
std::string skeleton_to_json_text(const Skeleton& skeleton);

}  // namespace posefit
