#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "posefit/fitting.hpp"
#include "posefit/oracle.hpp"

namespace posefit {

/// Flat view of a JSON config file. Nested objects are addressed with dotted
/// keys, so {"fit": {"w_ik": 1}} and {"fit.w_ik": 1} are equivalent.
class ConfigMap {
 public:
  static ConfigMap from_json_text(const std::string& text);
  static ConfigMap load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  double number(const std::string& key, double fallback) const;
  int integer(const std::string& key, int fallback) const;
  bool boolean(const std::string& key, bool fallback) const;
  std::string text(const std::string& key, const std::string& fallback) const;

  // Command-line overrides; value is parsed as JSON, falling back to a string.
  void set(const std::string& key, const std::string& value);
  // Throws ConfigError naming the first key outside `known`.
  void reject_unknown(const std::vector<std::string>& known) const;

 private:
  std::map<std::string, std::string> values_;  // key -> JSON-encoded scalar
};

// Every key read by tracker_config and observe_settings.
const std::vector<std::string>& known_config_keys();

// Keys: fit.{w_ik,w_proj,w_smooth,w_depth,max_iters,jacobian,nominal_depth_mm},
// filter.{keypoints,local3d,global3d}.{fcmin,beta,dcutoff}, filter.enabled,
// decode.subcell, frame_rate_hz.
TrackerConfig tracker_config(const ConfigMap& config);
// Keys: bb.{momentum,buffer_w,buffer_h,crop}, maps.{stride,sigma_cells}.
ObserveSettings observe_settings(const ConfigMap& config);

// Motion spec file: optional "preset": "default", then "frames", "fps",
// "fov_deg", "image": [w, h], "base_pose": {joint: [rx, ry, rz]},
// "sinusoids": {joint: {"amplitude_rad": [..], "frequency_hz": f, "phase_rad": p}},
// "root_path": {"kind": "fixed"|"linear"|"circle", "origin": [..],
//               "velocity_mm_s": [..], "radius_mm": r, "period_s": T}.
MotionSpec motion_spec_from_json(const std::string& text, const Skeleton& skeleton);
// Noise spec file: the NoiseSpec field names as keys.
NoiseSpec noise_spec_from_json(const std::string& text);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace posefit
