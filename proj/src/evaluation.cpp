#include "posefit/evaluation.hpp"

#include <cmath>
#include <json.hpp>
#include <sstream>

#include "posefit/error.hpp"

namespace posefit {

using detail::require;

std::vector<double> auc_thresholds() {
  std::vector<double> t;
  for (int i = 0; i <= 30; ++i) t.push_back(5.0 * i);
  return t;
}

double joint_error(const Vec3& a, const Vec3& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

std::vector<std::vector<double>> joint_errors(const PoseSequence& pred, const PoseSequence& gt,
                                              const std::vector<int>& joints, int root) {
  require(pred.size() == gt.size(), "prediction and ground truth lengths differ");
  require(!pred.empty(), "cannot evaluate an empty sequence");
  require(!joints.empty(), "joint subset is empty");
  std::vector<std::vector<double>> out(pred.size());
  for (std::size_t f = 0; f < pred.size(); ++f) {
    require(pred[f].size() == gt[f].size(), "joint counts differ at frame " + std::to_string(f));
    const int n = static_cast<int>(pred[f].size());
    require(root >= 0 && root < n, "root index out of range");
    const Vec3& pr = pred[f][root];
    const Vec3& gr = gt[f][root];
    out[f].reserve(joints.size());
    for (int j : joints) {
      require(j >= 0 && j < n, "joint index out of range");
      out[f].push_back(joint_error(pred[f][j] - pr, gt[f][j] - gr));
    }
  }
  return out;
}

double mpjpe(const PoseSequence& pred, const PoseSequence& gt, const std::vector<int>& joints,
             int root) {
  const auto errors = joint_errors(pred, gt, joints, root);
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& frame : errors) {
    for (double e : frame) {
      sum += e;
      ++count;
    }
  }
  return sum / static_cast<double>(count);
}

namespace {

double pck_from_errors(const std::vector<std::vector<double>>& errors, double threshold) {
  std::size_t hit = 0, count = 0;
  for (const auto& frame : errors) {
    for (double e : frame) {
      if (e < threshold) ++hit;
      ++count;
    }
  }
  return static_cast<double>(hit) / static_cast<double>(count);
}

double auc_from_errors(const std::vector<std::vector<double>>& errors) {
  const auto grid = auc_thresholds();
  double sum = 0.0;
  for (double t : grid) sum += pck_from_errors(errors, t);
  return sum / static_cast<double>(grid.size());
}

}  // namespace

double pck(const PoseSequence& pred, const PoseSequence& gt, const std::vector<int>& joints,
           double threshold_mm, int root) {
  return pck_from_errors(joint_errors(pred, gt, joints, root), threshold_mm);
}

double auc(const PoseSequence& pred, const PoseSequence& gt, const std::vector<int>& joints, int root) {
  return auc_from_errors(joint_errors(pred, gt, joints, root));
}

double jitter(const PoseSequence& seq, const std::vector<int>& joints) {
  require(seq.size() >= 3, "jitter needs at least three frames");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 2; t < seq.size(); ++t) {
    for (int j : joints) {
      const Vec3 acc = seq[t][j] - 2.0 * seq[t - 1][j] + seq[t - 2][j];
      sum += joint_error(acc, Vec3::Zero());
      ++count;
    }
  }
  return sum / static_cast<double>(count);
}

EvalReport evaluate(const PoseSequence& pred, const PoseSequence& gt, const Skeleton& skeleton) {
  const auto joints = evaluation_joints(skeleton);
  const int root = skeleton.root();
  const auto errors = joint_errors(pred, gt, joints, root);

  EvalReport r;
  r.frames = static_cast<int>(pred.size());
  r.mpjpe_mm = mpjpe(pred, gt, joints, root);
  r.thresholds_mm = auc_thresholds();
  for (double t : r.thresholds_mm) r.pck.push_back(pck_from_errors(errors, t));
  r.pck150 = pck_from_errors(errors, kPckThresholdMm);
  r.auc = auc_from_errors(errors);
  for (std::size_t k = 0; k < joints.size(); ++k) {
    JointReport jr;
    jr.name = skeleton.name(joints[k]);
    std::size_t hit = 0;
    for (const auto& frame : errors) {
      jr.mpjpe_mm += frame[k];
      if (frame[k] < kPckThresholdMm) ++hit;
    }
    jr.mpjpe_mm /= static_cast<double>(errors.size());
    jr.pck = static_cast<double>(hit) / static_cast<double>(errors.size());
    r.per_joint.push_back(jr);
  }
  if (pred.size() >= 3) r.jitter_mm_per_frame2 = jitter(pred, joints);
  return r;
}

std::string report_to_json(const EvalReport& r) {
  nlohmann::ordered_json doc;
  doc["frames"] = r.frames;
  doc["mpjpe_mm"] = r.mpjpe_mm;
  doc["pck150"] = r.pck150;
  doc["auc"] = r.auc;
  doc["auc_grid"] = "0-150 mm inclusive, step 5 mm (31 thresholds)";
  doc["thresholds_mm"] = r.thresholds_mm;
  doc["pck"] = r.pck;
  doc["jitter_mm_per_frame2"] = r.jitter_mm_per_frame2;
  auto& pj = doc["per_joint"] = nlohmann::ordered_json::array();
  for (const auto& j : r.per_joint) {
    pj.push_back({{"name", j.name}, {"mpjpe_mm", j.mpjpe_mm}, {"pck150", j.pck}});
  }
  return doc.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    EvalReport r;
    r.frames = doc.at("frames").get<int>();
    r.mpjpe_mm = doc.at("mpjpe_mm").get<double>();
    r.pck150 = doc.at("pck150").get<double>();
    r.auc = doc.at("auc").get<double>();
    r.thresholds_mm = doc.at("thresholds_mm").get<std::vector<double>>();
    r.pck = doc.at("pck").get<std::vector<double>>();
    r.jitter_mm_per_frame2 = doc.at("jitter_mm_per_frame2").get<double>();
    for (const auto& j : doc.at("per_joint")) {
      r.per_joint.push_back({j.at("name").get<std::string>(), j.at("mpjpe_mm").get<double>(),
                             j.at("pck150").get<double>()});
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed evaluation report: ") + e.what());
  }
}

std::string errors_to_csv(const PoseSequence& pred, const PoseSequence& gt, const Skeleton& skeleton) {
  const auto joints = evaluation_joints(skeleton);
  const auto errors = joint_errors(pred, gt, joints, skeleton.root());
  std::ostringstream out;
  out.precision(17);
  out << "frame,joint,error_mm\n";
  for (std::size_t f = 0; f < errors.size(); ++f) {
    for (std::size_t k = 0; k < joints.size(); ++k) {
      out << f << ',' << skeleton.name(joints[k]) << ',' << errors[f][k] << '\n';
    }
  }
  return out.str();
}

}  // namespace posefit
