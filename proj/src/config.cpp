#include "posefit/config.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "posefit/error.hpp"

namespace posefit {

using json = nlohmann::json;

namespace {

void flatten_into(const json& node, const std::string& prefix, std::map<std::string, std::string>& out) {
  if (node.is_object()) {
    for (auto it = node.begin(); it != node.end(); ++it) {
      flatten_into(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
    }
    return;
  }
  out[prefix] = node.dump();
}

json parse_or_throw(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string(what) + " is not valid JSON: " + e.what());
  }
}

template <class T>
T get_value(const std::map<std::string, std::string>& values, const std::string& key, T fallback) {
  auto it = values.find(key);
  if (it == values.end()) return fallback;
  try {
    return json::parse(it->second).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

Vec3 vec3_from(const json& v, const std::string& what) {
  const auto a = v.get<std::vector<double>>();
  if (a.size() != 3) throw ConfigError(what + " needs three values");
  return Vec3(a[0], a[1], a[2]);
}

}  // namespace

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ConfigMap ConfigMap::from_json_text(const std::string& text) {
  const json doc = parse_or_throw(text, "config");
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  ConfigMap m;
  flatten_into(doc, "", m.values_);
  return m;
}

ConfigMap ConfigMap::load(const std::filesystem::path& path) {
  return from_json_text(read_text_file(path));
}

double ConfigMap::number(const std::string& key, double fallback) const {
  return get_value<double>(values_, key, fallback);
}

int ConfigMap::integer(const std::string& key, int fallback) const {
  return get_value<int>(values_, key, fallback);
}

bool ConfigMap::boolean(const std::string& key, bool fallback) const {
  return get_value<bool>(values_, key, fallback);
}

std::string ConfigMap::text(const std::string& key, const std::string& fallback) const {
  return get_value<std::string>(values_, key, fallback);
}

void ConfigMap::set(const std::string& key, const std::string& value) {
  const json parsed = json::parse(value, nullptr, false);
  values_[key] = parsed.is_discarded() ? json(value).dump() : parsed.dump();
}

const std::vector<std::string>& known_config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k = {"fit.w_ik",        "fit.w_proj",     "fit.w_smooth",
                                  "fit.w_depth",     "fit.max_iters",  "fit.jacobian",
                                  "fit.nominal_depth_mm", "frame_rate_hz", "filter.enabled",
                                  "decode.subcell",  "bb.momentum",    "bb.buffer_w",
                                  "bb.buffer_h",     "bb.crop",        "maps.stride",
                                  "maps.sigma_cells"};
    for (const char* stage : {"keypoints", "local3d", "global3d"}) {
      for (const char* field : {"fcmin", "beta", "dcutoff"}) {
        k.push_back(std::string("filter.") + stage + "." + field);
      }
    }
    return k;
  }();
  return keys;
}

void ConfigMap::reject_unknown(const std::vector<std::string>& known) const {
  for (const auto& [key, value] : values_) {
    if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError("unknown config key '" + key + "'");
  }
}

TrackerConfig tracker_config(const ConfigMap& c) {
  TrackerConfig t;
  t.weights.w_ik = c.number("fit.w_ik", t.weights.w_ik);
  t.weights.w_proj = c.number("fit.w_proj", t.weights.w_proj);
  t.weights.w_smooth = c.number("fit.w_smooth", t.weights.w_smooth);
  t.weights.w_depth = c.number("fit.w_depth", t.weights.w_depth);
  t.solver.max_iterations = c.integer("fit.max_iters", t.solver.max_iterations);
  const std::string jac = c.text("fit.jacobian", "analytic");
  if (jac == "analytic") {
    t.solver.jacobian = JacobianMode::analytic;
  } else if (jac == "numeric") {
    t.solver.jacobian = JacobianMode::numeric;
  } else {
    throw ConfigError("fit.jacobian must be 'analytic' or 'numeric'");
  }
  t.nominal_depth_mm = c.number("fit.nominal_depth_mm", t.nominal_depth_mm);
  t.frame_rate_hz = c.number("frame_rate_hz", t.frame_rate_hz);
  t.enable_filters = c.boolean("filter.enabled", t.enable_filters);
  t.subcell_refinement = c.boolean("decode.subcell", t.subcell_refinement);

  auto read_filter = [&](const std::string& stage, OneEuroParams& p) {
    p.fc_min = c.number("filter." + stage + ".fcmin", p.fc_min);
    p.beta = c.number("filter." + stage + ".beta", p.beta);
    p.d_cutoff = c.number("filter." + stage + ".dcutoff", p.d_cutoff);
  };
  read_filter("keypoints", t.keypoint_filter);
  read_filter("local3d", t.local_filter);
  read_filter("global3d", t.global_filter);

  try {
    t.weights.validate();
    t.keypoint_filter.validate();
    t.local_filter.validate();
    t.global_filter.validate();
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  if (t.solver.max_iterations < 0) throw ConfigError("fit.max_iters must be >= 0");
  if (t.nominal_depth_mm <= 0.0) throw ConfigError("fit.nominal_depth_mm must be positive");
  if (t.frame_rate_hz <= 0.0) throw ConfigError("frame_rate_hz must be positive");
  return t;
}

ObserveSettings observe_settings(const ConfigMap& c) {
  ObserveSettings s;
  s.box.momentum = c.number("bb.momentum", s.box.momentum);
  s.box.buffer_w = c.number("bb.buffer_w", s.box.buffer_w);
  s.box.buffer_h = c.number("bb.buffer_h", s.box.buffer_h);
  s.box.crop_px = c.number("bb.crop", s.box.crop_px);
  s.grid.stride_px = c.number("maps.stride", s.grid.stride_px);
  s.sigma_cells = c.number("maps.sigma_cells", s.sigma_cells);
  if (s.box.momentum < 0.0 || s.box.momentum >= 1.0) throw ConfigError("bb.momentum must be in [0, 1)");
  if (s.box.buffer_w < 0.0 || s.box.buffer_h < 0.0) throw ConfigError("bb buffers must be >= 0");
  if (s.grid.stride_px <= 0.0 || s.sigma_cells <= 0.0) throw ConfigError("map settings must be positive");
  const double cells = s.box.crop_px / s.grid.stride_px;
  if (std::abs(cells - std::round(cells)) > 1e-9 || cells < 1.0) {
    throw ConfigError("bb.crop must be a whole multiple of maps.stride");
  }
  s.grid.width = s.grid.height = static_cast<int>(std::round(cells));
  return s;
}

MotionSpec motion_spec_from_json(const std::string& text, const Skeleton& skeleton) {
  const json doc = parse_or_throw(text, "motion spec");
  try {
    MotionSpec spec;
    const std::string preset = doc.value("preset", std::string("none"));
    if (preset == "default") {
      spec = default_motion(skeleton);
    } else if (preset != "none") {
      throw ConfigError("unknown motion preset '" + preset + "'");
    }
    spec.frames = doc.value("frames", spec.frames);
    spec.fps = doc.value("fps", spec.fps);
    spec.fov_deg = doc.value("fov_deg", spec.fov_deg);
    if (doc.contains("image")) {
      const auto wh = doc.at("image").get<std::vector<int>>();
      if (wh.size() != 2) throw ConfigError("image needs [width, height]");
      spec.image = {wh[0], wh[1]};
    }
    const int n = skeleton.joint_count();
    if (doc.contains("base_pose")) {
      if (spec.base_theta.size() == 0) spec.base_theta = Eigen::VectorXd::Zero(3 * n);
      for (auto it = doc["base_pose"].begin(); it != doc["base_pose"].end(); ++it) {
        spec.base_theta.segment<3>(3 * skeleton.index_of(it.key())) =
            vec3_from(it.value(), "base_pose." + it.key());
      }
    }
    if (doc.contains("sinusoids")) {
      if (spec.sinusoids.empty()) spec.sinusoids.assign(n, JointSinusoid{});
      for (auto it = doc["sinusoids"].begin(); it != doc["sinusoids"].end(); ++it) {
        auto& s = spec.sinusoids[skeleton.index_of(it.key())];
        const auto& v = it.value();
        s.amplitude_rad = vec3_from(v.at("amplitude_rad"), "sinusoids." + it.key());
        s.frequency_hz = v.value("frequency_hz", 0.0);
        s.phase_rad = v.value("phase_rad", 0.0);
      }
    }
    if (doc.contains("root_path")) {
      const auto& r = doc["root_path"];
      const std::string kind = r.value("kind", std::string("fixed"));
      if (kind == "fixed") {
        spec.root.kind = RootPathKind::fixed;
      } else if (kind == "linear") {
        spec.root.kind = RootPathKind::linear;
      } else if (kind == "circle") {
        spec.root.kind = RootPathKind::circle;
      } else {
        throw ConfigError("unknown root_path kind '" + kind + "'");
      }
      if (r.contains("origin")) spec.root.origin = vec3_from(r["origin"], "root_path.origin");
      if (r.contains("velocity_mm_s")) {
        spec.root.velocity_mm_s = vec3_from(r["velocity_mm_s"], "root_path.velocity_mm_s");
      }
      spec.root.radius_mm = r.value("radius_mm", spec.root.radius_mm);
      spec.root.period_s = r.value("period_s", spec.root.period_s);
    }
    if (spec.frames <= 0) throw ConfigError("motion spec needs frames > 0");
    if (spec.fps <= 0.0) throw ConfigError("motion spec needs fps > 0");
    return spec;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed motion spec: ") + e.what());
  } catch (const ContractError& e) {
    throw ConfigError(std::string("invalid motion spec: ") + e.what());
  }
}

NoiseSpec noise_spec_from_json(const std::string& text) {
  const json doc = parse_or_throw(text, "noise spec");
  try {
    NoiseSpec n;
    n.kp_jitter_sigma_px = doc.value("kp_jitter_sigma_px", n.kp_jitter_sigma_px);
    n.depth_noise_sigma_mm = doc.value("depth_noise_sigma_mm", n.depth_noise_sigma_mm);
    n.outlier_prob = doc.value("outlier_prob", n.outlier_prob);
    n.outlier_shift_px = doc.value("outlier_shift_px", n.outlier_shift_px);
    n.bb_jitter_px = doc.value("bb_jitter_px", n.bb_jitter_px);
    n.offpeak_bias_mm = doc.value("offpeak_bias_mm", n.offpeak_bias_mm);
    n.seed = doc.value("seed", n.seed);
    n.validate();
    return n;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed noise spec: ") + e.what());
  } catch (const ContractError& e) {
    throw ConfigError(std::string("invalid noise spec: ") + e.what());
  }
}

}  // namespace posefit
