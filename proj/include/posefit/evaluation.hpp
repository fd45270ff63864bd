#pragma once

#include <string>
#include <vector>

#include "posefit/skeleton.hpp"

namespace posefit {

// A sequence of per-frame joint positions (any frame; roots are aligned
// inside each metric).
using PoseSequence = std::vector<Points3>;

inline constexpr double kPckThresholdMm = 150.0;

// 0, 5, ..., 150 mm.
std::vector<double> auc_thresholds();

// Euclidean distance computed as sqrt(dx*dx + dy*dy + dz*dz) in that order.
double joint_error(const Vec3& a, const Vec3& b);

// Root-aligned per-frame, per-joint errors for the listed joints.
std::vector<std::vector<double>> joint_errors(const PoseSequence& pred, const PoseSequence& gt,
                                              const std::vector<int>& joints, int root = 0);

double mpjpe(const PoseSequence& pred, const PoseSequence& gt, const std::vector<int>& joints,
             int root = 0);
// Fraction of joint instances with error strictly below threshold_mm.
double pck(const PoseSequence& pred, const PoseSequence& gt, const std::vector<int>& joints,
           double threshold_mm = kPckThresholdMm, int root = 0);
// Mean PCK over auc_thresholds().
double auc(const PoseSequence& pred, const PoseSequence& gt, const std::vector<int>& joints,
           int root = 0);
// Mean ||p_t - 2 p_t-1 + p_t-2|| over joints and frames (mm / frame^2).
double jitter(const PoseSequence& seq, const std::vector<int>& joints);

struct JointReport {
  std::string name;
  double mpjpe_mm = 0.0;
  double pck = 0.0;
};

struct EvalReport {
  double mpjpe_mm = 0.0;
  std::vector<double> thresholds_mm;
  std::vector<double> pck;  // per threshold
  double pck150 = 0.0;
  double auc = 0.0;
  std::vector<JointReport> per_joint;
  double jitter_mm_per_frame2 = 0.0;  // of the predicted joint positions as given
  int frames = 0;
};

EvalReport evaluate(const PoseSequence& pred, const PoseSequence& gt, const Skeleton& skeleton);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);
// Columns: frame,joint,error_mm.
std::string errors_to_csv(const PoseSequence& pred, const PoseSequence& gt, const Skeleton& skeleton);

}  // namespace posefit
