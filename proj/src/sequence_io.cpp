#include "posefit/sequence_io.hpp"

#include <fstream>
#include <json.hpp>

#include "posefit/error.hpp"

namespace posefit {

using json = nlohmann::ordered_json;

namespace {

json points_json(const Points3& pts) {
  json a = json::array();
  for (const auto& p : pts) a.push_back({p.x(), p.y(), p.z()});
  return a;
}

Points3 points_from(const json& a) {
  Points3 out;
  for (const auto& p : a) {
    const auto v = p.get<std::vector<double>>();
    if (v.size() != 3) throw DataError("joint entry needs three coordinates");
    out.emplace_back(v[0], v[1], v[2]);
  }
  return out;
}

json box_json(const BoundingBox& b) { return {b.min.x(), b.min.y(), b.max.x(), b.max.y()}; }

}  // namespace

std::string meta_to_json(const SequenceMeta& m) {
  json doc;
  doc["format"] = "posefit-sequence";
  doc["version"] = 1;
  doc["frames"] = m.frames;
  doc["fps"] = m.fps;
  doc["camera"] = {{"focal_px", m.camera.focal_px},
                   {"principal_point", {m.camera.principal_point.x(), m.camera.principal_point.y()}},
                   {"width", m.camera.image_size.width},
                   {"height", m.camera.image_size.height}};
  doc["maps"] = {{"width", m.settings.grid.width},
                 {"height", m.settings.grid.height},
                 {"stride", m.settings.grid.stride_px},
                 {"sigma_cells", m.settings.sigma_cells}};
  doc["bb"] = {{"momentum", m.settings.box.momentum},
               {"buffer_w", m.settings.box.buffer_w},
               {"buffer_h", m.settings.box.buffer_h},
               {"crop", m.settings.box.crop_px}};
  doc["noise"] = {{"kp_jitter_sigma_px", m.noise.kp_jitter_sigma_px},
                  {"depth_noise_sigma_mm", m.noise.depth_noise_sigma_mm},
                  {"outlier_prob", m.noise.outlier_prob},
                  {"outlier_shift_px", m.noise.outlier_shift_px},
                  {"bb_jitter_px", m.noise.bb_jitter_px},
                  {"offpeak_bias_mm", m.noise.offpeak_bias_mm},
                  {"seed", m.noise.seed}};
  doc["rng"] = m.rng;
  doc["skeleton"] = json::parse(m.skeleton_json);
  return doc.dump(2) + "\n";
}

SequenceMeta meta_from_json(const std::string& text) {
  try {
    const json doc = json::parse(text);
    if (doc.value("format", std::string()) != "posefit-sequence") {
      throw DataError("not a sequence metadata file");
    }
    SequenceMeta m;
    m.frames = doc.at("frames").get<int>();
    m.fps = doc.at("fps").get<double>();
    const auto& c = doc.at("camera");
    const auto pp = c.at("principal_point").get<std::vector<double>>();
    m.camera = CameraModel(c.at("focal_px").get<double>(), Vec2(pp.at(0), pp.at(1)),
                           ImageSize{c.at("width").get<int>(), c.at("height").get<int>()});
    const auto& maps = doc.at("maps");
    m.settings.grid.width = maps.at("width").get<int>();
    m.settings.grid.height = maps.at("height").get<int>();
    m.settings.grid.stride_px = maps.at("stride").get<double>();
    m.settings.sigma_cells = maps.at("sigma_cells").get<double>();
    const auto& bb = doc.at("bb");
    m.settings.box.momentum = bb.at("momentum").get<double>();
    m.settings.box.buffer_w = bb.at("buffer_w").get<double>();
    m.settings.box.buffer_h = bb.at("buffer_h").get<double>();
    m.settings.box.crop_px = bb.at("crop").get<double>();
    const auto& n = doc.at("noise");
    m.noise.kp_jitter_sigma_px = n.at("kp_jitter_sigma_px").get<double>();
    m.noise.depth_noise_sigma_mm = n.at("depth_noise_sigma_mm").get<double>();
    m.noise.outlier_prob = n.at("outlier_prob").get<double>();
    m.noise.outlier_shift_px = n.at("outlier_shift_px").get<double>();
    m.noise.bb_jitter_px = n.at("bb_jitter_px").get<double>();
    m.noise.offpeak_bias_mm = n.at("offpeak_bias_mm").get<double>();
    m.noise.seed = n.at("seed").get<std::uint64_t>();
    m.rng = doc.at("rng").get<std::string>();
    m.skeleton_json = doc.at("skeleton").dump(2);
    return m;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed sequence metadata: ") + e.what());
  } catch (const ContractError& e) {
    throw DataError(std::string("invalid sequence metadata: ") + e.what());
  }
}

std::string frame_record(const GtFrame& gt, const Observation& obs) {
  json doc;
  doc["frame"] = gt.index;
  doc["t"] = gt.timestamp_s;
  doc["theta"] = std::vector<double>(gt.pose.theta.data(), gt.pose.theta.data() + gt.pose.theta.size());
  doc["d"] = {gt.pose.d.x(), gt.pose.d.y(), gt.pose.d.z()};
  doc["joints"] = points_json(gt.joints);
  json kp = json::array();
  for (const auto& p : obs.gt_keypoints_frame.location) kp.push_back({p.x(), p.y()});
  doc["keypoints"] = kp;
  doc["visible"] = obs.gt_keypoints_frame.visible;
  doc["box"] = box_json(obs.crop.box());
  doc["crop"] = obs.crop.crop_px();
  return doc.dump();
}

StoredFrame parse_frame_record(const std::string& line, int joint_count) {
  try {
    const json doc = json::parse(line);
    StoredFrame f;
    f.gt.index = doc.at("frame").get<int>();
    f.gt.timestamp_s = doc.at("t").get<double>();
    const auto theta = doc.at("theta").get<std::vector<double>>();
    f.gt.pose.theta = Eigen::Map<const Eigen::VectorXd>(theta.data(), static_cast<Eigen::Index>(theta.size()));
    const auto d = doc.at("d").get<std::vector<double>>();
    if (d.size() != 3) throw DataError("d needs three values");
    f.gt.pose.d = Vec3(d[0], d[1], d[2]);
    f.gt.joints = points_from(doc.at("joints"));
    for (const auto& p : doc.at("keypoints")) {
      const auto v = p.get<std::vector<double>>();
      if (v.size() != 2) throw DataError("keypoint needs two coordinates");
      f.gt_keypoints_frame.location.emplace_back(v[0], v[1]);
    }
    f.gt_keypoints_frame.visible = doc.at("visible").get<std::vector<bool>>();
    for (bool v : f.gt_keypoints_frame.visible) f.gt_keypoints_frame.confidence.push_back(v ? 1.0 : 0.0);
    const auto b = doc.at("box").get<std::vector<double>>();
    if (b.size() != 4) throw DataError("box needs four values");
    f.box = {Vec2(b[0], b[1]), Vec2(b[2], b[3])};
    f.crop_px = doc.at("crop").get<double>();
    if (static_cast<int>(f.gt.joints.size()) != joint_count ||
        f.gt_keypoints_frame.size() != joint_count ||
        static_cast<int>(f.gt_keypoints_frame.visible.size()) != joint_count ||
        f.gt.pose.theta.size() != 3 * joint_count) {
      throw DataError("frame record does not match the skeleton");
    }
    return f;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed frame record: ") + e.what());
  }
}

std::vector<StoredFrame> read_frames(const std::filesystem::path& path, int joint_count) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<StoredFrame> frames;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    frames.push_back(parse_frame_record(line, joint_count));
  }
  return frames;
}

std::string pose_record(const FrameOutput& out) {
  json doc;
  doc["frame"] = out.frame;
  doc["t"] = out.timestamp_s;
  const auto& theta = out.pose.theta;
  doc["theta"] = std::vector<double>(theta.data(), theta.data() + theta.size());
  doc["d"] = {out.pose.d.x(), out.pose.d.y(), out.pose.d.z()};
  doc["joints"] = points_json(out.global_positions);
  doc["local"] = points_json(out.local.positions);
  const auto& t = out.fit.terms;
  doc["energy"] = {{"ik", t.ik}, {"proj", t.proj}, {"smooth", t.smooth}, {"depth", t.depth},
                   {"total", t.total()}};
  doc["iterations"] = out.fit.iterations;
  doc["converged"] = out.fit.converged;
  json flags = json::array();
  if (out.fit.rejected) flags.push_back("rejected");
  if (out.fit.diverged) flags.push_back("diverged");
  if (out.fit.behind_camera) flags.push_back("behind_camera");
  doc["flags"] = flags;
  return doc.dump();
}

PoseSequence read_joint_sequence(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  PoseSequence seq;
  std::string line;
  try {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      seq.push_back(points_from(json::parse(line).at("joints")));
    }
  } catch (const json::exception& e) {
    throw DataError("malformed line in " + path.string() + ": " + e.what());
  }
  return seq;
}

}  // namespace posefit
