#include "posefit/skeleton.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "posefit/error.hpp"

namespace posefit {

using detail::require;

namespace {

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

}  // namespace

Skeleton::Skeleton(std::vector<JointSpec> joints) : joints_(std::move(joints)) {
  const int n = joint_count();
  require(n >= 15, "skeleton needs at least 15 joints, got " + std::to_string(n));

  int roots = 0;
  children_.assign(n, {});
  for (int j = 0; j < n; ++j) {
    const auto& spec = joints_[j];
    if (spec.parent == kNoParent) {
      ++roots;
      root_ = j;
      continue;
    }
    require(spec.parent >= 0 && spec.parent < n && spec.parent != j,
            "joint '" + spec.name + "' has an invalid parent index");
    require(spec.bone_length_mm > 0.0 && std::isfinite(spec.bone_length_mm),
            "joint '" + spec.name + "' needs a positive bone length");
    require(std::abs(spec.rest_direction.norm() - 1.0) <= 1e-9,
            "joint '" + spec.name + "' rest direction is not a unit vector");
    children_[spec.parent].push_back(j);
  }
  require(roots == 1, "skeleton must have exactly one root");
  joints_[root_].bone_length_mm = 0.0;

  // Breadth-first from the root; anything unreached sits on a cycle.
  order_.reserve(n);
  order_.push_back(root_);
  for (std::size_t i = 0; i < order_.size(); ++i) {
    for (int c : children_[order_[i]]) order_.push_back(c);
  }
  require(static_cast<int>(order_.size()) == n, "skeleton parent links contain a cycle");
}

int Skeleton::index_of(std::string_view name) const {
  for (int j = 0; j < joint_count(); ++j) {
    if (joints_[j].name == name) return j;
  }
  throw ContractError("unknown joint '" + std::string(name) + "'");
}

bool Skeleton::is_ancestor(int ancestor, int j) const {
  for (int p = parent(j); p != kNoParent; p = parent(p)) {
    if (p == ancestor) return true;
  }
  return false;
}

Skeleton Skeleton::with_bone_lengths(const std::vector<double>& lengths) const {
  require(static_cast<int>(lengths.size()) == joint_count(), "bone length count mismatch");
  auto joints = joints_;
  for (int j = 0; j < joint_count(); ++j) {
    if (j != root_) joints[j].bone_length_mm = lengths[j];
  }
  return Skeleton(std::move(joints));
}

Skeleton Skeleton::scaled(double factor) const {
  require(factor > 0.0 && std::isfinite(factor), "scale factor must be positive");
  auto joints = joints_;
  for (auto& j : joints) j.bone_length_mm *= factor;
  return Skeleton(std::move(joints));
}

Points3 Skeleton::rest_positions() const {
  Points3 p(joint_count(), Vec3::Zero());
  for (int j : order_) {
    if (j == root_) continue;
    p[j] = p[parent(j)] + bone_length(j) * rest_direction(j);
  }
  return p;
}

double Skeleton::rest_height() const {
  const auto p = rest_positions();
  double lo = 0.0, hi = 0.0;
  for (const auto& q : p) {
    lo = std::min(lo, q.y());
    hi = std::max(hi, q.y());
  }
  return hi - lo;
}

double Skeleton::knee_neck_height() const {
  const auto p = rest_positions();
  const double knees = 0.5 * (p[index_of("r_knee")].y() + p[index_of("l_knee")].y());
  return std::abs(knees - p[index_of("neck")].y());
}

Pose Pose::zero(int joint_count) {
  Pose pose;
  pose.theta = Eigen::VectorXd::Zero(3 * joint_count);
  return pose;
}

bool Pose::is_finite() const { return theta.allFinite() && d.allFinite(); }

Skeleton default_skeleton() {
  const Vec3 up(0, -1, 0), down(0, 1, 0), right(-1, 0, 0), left(1, 0, 0);
  const Vec3 toe = Vec3(0, 0.3, -0.954).normalized();
  std::vector<JointSpec> j = {
      {"pelvis", kNoParent, 0.0, Vec3::Zero()},
      {"spine", 0, 250.0, up},
      {"neck", 1, 280.0, up},
      {"head", 2, 120.0, up},
      {"head_top", 3, 110.0, up},
      {"r_shoulder", 2, 170.0, right},
      {"r_elbow", 5, 290.0, down},
      {"r_wrist", 6, 260.0, down},
      {"r_hand", 7, 80.0, down},
      {"l_shoulder", 2, 170.0, left},
      {"l_elbow", 9, 290.0, down},
      {"l_wrist", 10, 260.0, down},
      {"l_hand", 11, 80.0, down},
      {"r_hip", 0, 100.0, right},
      {"r_knee", 13, 440.0, down},
      {"r_ankle", 14, 420.0, down},
      {"r_foot_tip", 15, 150.0, toe},
      {"l_hip", 0, 100.0, left},
      {"l_knee", 17, 440.0, down},
      {"l_ankle", 18, 420.0, down},
      {"l_foot_tip", 19, 150.0, toe},
  };
  return Skeleton(std::move(j));
}

std::vector<int> evaluation_joints(const Skeleton& skeleton) {
  static const char* kNames[] = {"head",    "neck",    "r_shoulder", "r_elbow", "r_wrist",
                                 "l_shoulder", "l_elbow", "l_wrist",  "r_hip",   "r_knee",
                                 "r_ankle", "l_hip",   "l_knee",     "l_ankle"};
  std::vector<int> out;
  for (const char* n : kNames) out.push_back(skeleton.index_of(n));
  return out;
}

Mat3 exp_so3(const Vec3& w) {
  const double angle = w.norm();
  if (angle < 1e-12) return Mat3::Identity() + skew(w);
  return Eigen::AngleAxisd(angle, w / angle).toRotationMatrix();
}

Mat3 right_jacobian_so3(const Vec3& w) {
  const double a2 = w.squaredNorm();
  const double a = std::sqrt(a2);
  double c1, c2;
  if (a < 1e-4) {
    c1 = 0.5 - a2 / 24.0;
    c2 = 1.0 / 6.0 - a2 / 120.0;
  } else {
    c1 = (1.0 - std::cos(a)) / a2;
    c2 = (a - std::sin(a)) / (a2 * a);
  }
  const Mat3 k = skew(w);
  return Mat3::Identity() - c1 * k + c2 * k * k;
}

namespace {

void check_pose(const Skeleton& skeleton, const Pose& pose) {
  require(pose.theta.size() == 3 * skeleton.joint_count(),
          "pose has " + std::to_string(pose.theta.size()) + " angles, skeleton needs " +
              std::to_string(3 * skeleton.joint_count()));
}

}  // namespace

Points3 forward_kinematics(const Skeleton& skeleton, const Pose& pose) {
  check_pose(skeleton, pose);
  const int n = skeleton.joint_count();
  Points3 p(n);
  std::vector<Mat3> rot(n);
  for (int j : skeleton.topological_order()) {
    const Mat3 local = exp_so3(pose.theta.segment<3>(3 * j));
    const int par = skeleton.parent(j);
    if (par == kNoParent) {
      p[j] = pose.d;
      rot[j] = local;
    } else {
      p[j] = p[par] + rot[par] * (skeleton.bone_length(j) * skeleton.rest_direction(j));
      rot[j] = rot[par] * local;
    }
  }
  return p;
}

Points3 forward_kinematics(const Skeleton& skeleton, const Pose& pose,
                           Eigen::MatrixXd& jacobian) {
  check_pose(skeleton, pose);
  const int n = skeleton.joint_count();
  Points3 p(n);
  std::vector<Mat3> rot(n);
  // rot[a] * Jr(theta_a): maps a parameter step at joint a to a world-frame
  // rotation increment of everything below a.
  std::vector<Mat3> axis(n);
  for (int j : skeleton.topological_order()) {
    const Vec3 w = pose.theta.segment<3>(3 * j);
    const Mat3 local = exp_so3(w);
    const int par = skeleton.parent(j);
    if (par == kNoParent) {
      p[j] = pose.d;
      rot[j] = local;
    } else {
      p[j] = p[par] + rot[par] * (skeleton.bone_length(j) * skeleton.rest_direction(j));
      rot[j] = rot[par] * local;
    }
    axis[j] = rot[j] * right_jacobian_so3(w);
  }

  jacobian.setZero(3 * n, 3 * n + 3);
  for (int k = 0; k < n; ++k) {
    jacobian.block<3, 3>(3 * k, 3 * n).setIdentity();
    for (int a = skeleton.parent(k); a != kNoParent; a = skeleton.parent(a)) {
      jacobian.block<3, 3>(3 * k, 3 * a) = -skew(p[k] - p[a]) * axis[a];
    }
  }
  return p;
}

LocalPose3D to_local(const Skeleton& skeleton, const Points3& global_positions) {
  require(static_cast<int>(global_positions.size()) == skeleton.joint_count(),
          "position count does not match skeleton");
  LocalPose3D out{global_positions};
  const Vec3 root = global_positions[skeleton.root()];
  for (auto& q : out.positions) q -= root;
  out.positions[skeleton.root()].setZero();
  return out;
}

LocalPose3D local_pose_from_global(const Skeleton& skeleton, const Pose& pose) {
  return to_local(skeleton, forward_kinematics(skeleton, pose));
}

Skeleton calibrate(const Skeleton& topology, const std::vector<LocalPose3D>& predictions,
                   double user_height_mm) {
  require(!predictions.empty(), "calibration needs at least one prediction");
  require(user_height_mm > 0.0 && std::isfinite(user_height_mm), "user height must be positive");
  const int n = topology.joint_count();
  std::vector<double> mean(n, 0.0);
  for (const auto& pred : predictions) {
    require(static_cast<int>(pred.positions.size()) == n, "prediction joint count mismatch");
    for (int j = 0; j < n; ++j) {
      if (j == topology.root()) continue;
      mean[j] += (pred.positions[j] - pred.positions[topology.parent(j)]).norm();
    }
  }
  for (auto& m : mean) m /= static_cast<double>(predictions.size());
  const Skeleton averaged = topology.with_bone_lengths(mean);
  return averaged.scaled(user_height_mm / averaged.rest_height());
}

Skeleton skeleton_from_json_text(const std::string& text) {
  nlohmann::ordered_json doc;
  try {
    doc = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("skeleton file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || doc.empty()) throw DataError("skeleton file must be a non-empty object");

  std::vector<std::string> names;
  for (auto it = doc.begin(); it != doc.end(); ++it) names.push_back(it.key());
  auto lookup = [&](const std::string& name) {
    auto pos = std::find(names.begin(), names.end(), name);
    if (pos == names.end()) throw DataError("skeleton parent '" + name + "' is not a joint");
    return static_cast<int>(pos - names.begin());
  };

  std::vector<JointSpec> joints;
  try {
    for (auto it = doc.begin(); it != doc.end(); ++it) {
      const auto& v = it.value();
      JointSpec spec;
      spec.name = it.key();
      spec.parent = v.at("parent").is_null() ? kNoParent : lookup(v.at("parent").get<std::string>());
      spec.bone_length_mm = v.at("length_mm").get<double>();
      const auto dir = v.at("rest_direction").get<std::vector<double>>();
      if (dir.size() != 3) throw DataError("rest_direction of '" + spec.name + "' needs 3 values");
      spec.rest_direction = Vec3(dir[0], dir[1], dir[2]);
      // Files carry rounded directions; renormalize non-root ones.
      if (spec.parent != kNoParent && spec.rest_direction.norm() > 0.0) {
        spec.rest_direction.normalize();
      }
      joints.push_back(std::move(spec));
    }
    return Skeleton(std::move(joints));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed skeleton entry: ") + e.what());
  } catch (const ContractError& e) {
    throw DataError(std::string("invalid skeleton: ") + e.what());
  }
}

Skeleton load_skeleton(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open skeleton file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return skeleton_from_json_text(ss.str());
}

std::string skeleton_to_json_text(const Skeleton& skeleton) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::object();
  for (int j = 0; j < skeleton.joint_count(); ++j) {
    const auto& d = skeleton.rest_direction(j);
    nlohmann::ordered_json entry;
    entry["parent"] = skeleton.parent(j) == kNoParent
                          ? nlohmann::ordered_json(nullptr)
                          : nlohmann::ordered_json(skeleton.name(skeleton.parent(j)));
    entry["length_mm"] = skeleton.bone_length(j);
    entry["rest_direction"] = {d.x(), d.y(), d.z()};
    doc[skeleton.name(j)] = entry;
  }
  return doc.dump(2) + "\n";
}

}  // namespace posefit
