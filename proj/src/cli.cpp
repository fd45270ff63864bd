#include "posefit/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "posefit/config.hpp"
#include "posefit/error.hpp"
#include "posefit/evaluation.hpp"
#include "posefit/fitting.hpp"
#include "posefit/oracle.hpp"
#include "posefit/pipeline.hpp"
#include "posefit/sequence_io.hpp"

namespace posefit {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

// Options shared by the subcommands that build a tracker or an oracle.
struct CommonOptions {
  std::string config_path;
  std::string skeleton_path;
  std::vector<std::string> overrides;  // key=value
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "JSON config file");
  cmd->add_option("--skeleton", o.skeleton_path, "skeleton JSON file");
  cmd->add_option("overrides", o.overrides, "config overrides as key=value");
}

ConfigMap load_config(const CommonOptions& o) {
  ConfigMap c = o.config_path.empty() ? ConfigMap{} : ConfigMap::load(o.config_path);
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("override '" + kv + "' is not of the form key=value");
    }
    c.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  c.reject_unknown(known_config_keys());
  return c;
}

Skeleton load_skeleton(const std::string& path) {
  if (path.empty()) return default_skeleton();
  try {
    return skeleton_from_json_text(read_text_file(path));
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream f(path, mode);
  if (!f) throw DataError("cannot write " + path.string());
  return f;
}

void write_text(const fs::path& path, const std::string& text) {
  auto f = open_out(path);
  f << text;
}

// Linear interpolation between closest ranks.
double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// ---------------------------------------------------------------- generate

struct GenerateOptions {
  CommonOptions common;
  std::string out_dir;
  std::string motion_path;
  std::string noise_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> fov_deg;
  std::optional<int> frames;
};

int cmd_generate(const GenerateOptions& o, std::ostream& out) {
  const ConfigMap config = load_config(o.common);
  const Skeleton skeleton = load_skeleton(o.common.skeleton_path);
  MotionSpec motion = o.motion_path.empty()
                          ? default_motion(skeleton)
                          : motion_spec_from_json(read_text_file(o.motion_path), skeleton);
  NoiseSpec noise = o.noise_path.empty() ? NoiseSpec{} : noise_spec_from_json(read_text_file(o.noise_path));
  if (o.seed) noise.seed = *o.seed;
  if (o.fov_deg) motion.fov_deg = *o.fov_deg;
  if (o.frames) motion.frames = *o.frames;
  if (motion.frames <= 0) throw ConfigError("frame count must be positive");
  const ObserveSettings settings = observe_settings(config);

  GeneratedSequence seq;
  try {
    seq = generate(motion, skeleton);
  } catch (const ContractError& e) {
    throw ConfigError(std::string("motion spec: ") + e.what());
  }

  const fs::path dir = o.out_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());

  SequenceMeta meta;
  meta.frames = motion.frames;
  meta.fps = motion.fps;
  meta.camera = seq.camera;
  meta.settings = settings;
  meta.noise = noise;
  meta.skeleton_json = skeleton_to_json_text(skeleton);
  write_text(dir / kMetaFile, meta_to_json(meta));

  auto frames = open_out(dir / kFramesFile);
  auto maps = open_out(dir / kMapsFile, std::ios::out | std::ios::binary);
  simulate(seq, skeleton, noise, settings, [&](const GtFrame& gt, const Observation& obs) {
    frames << frame_record(gt, obs) << '\n';
    write_maps(maps, obs.maps);
  });
  if (!frames || !maps) throw DataError("failed writing sequence files");
  out << "generated " << motion.frames << " frames in " << dir.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- track

struct TrackOptions {
  CommonOptions common;
  std::string in_dir;
  std::string out_dir;
  bool gt_2d_lookup = false;
  bool no_ik = false;
  bool no_filter = false;
  std::optional<int> max_iters;
  std::string jacobian;
  std::optional<double> height_mm;
  int calibration_frames = 30;
  int warmup = 10;
  double max_flagged = 0.1;
};

// Streams stored map stacks alongside their frame records.
class StoredSequence {
 public:
  explicit StoredSequence(const fs::path& dir)
      : dir_(dir), meta_(meta_from_json(read_sequence_file(dir / kMetaFile))) {}

  const SequenceMeta& meta() const { return meta_; }
  const fs::path& dir() const { return dir_; }

  std::vector<StoredFrame> frames(int joint_count) const {
    auto frames = read_frames(dir_ / kFramesFile, joint_count);
    if (static_cast<int>(frames.size()) != meta_.frames) {
      throw DataError("frames.jsonl holds " + std::to_string(frames.size()) + " frames, meta.json says " +
                      std::to_string(meta_.frames));
    }
    return frames;
  }

  std::ifstream open_maps() const {
    std::ifstream in(dir_ / kMapsFile, std::ios::binary);
    if (!in) throw DataError("cannot open " + (dir_ / kMapsFile).string());
    return in;
  }

  static MapStack next_maps(std::istream& in, int joint_count) {
    auto maps = read_maps(in);
    if (!maps) throw DataError("maps.pfmp ends before frames.jsonl");
    if (maps->joint_count() != joint_count) throw DataError("map stack joint count does not match skeleton");
    return std::move(*maps);
  }

 private:
  static std::string read_sequence_file(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw DataError("cannot open " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  fs::path dir_;
  SequenceMeta meta_;
};

Skeleton sequence_skeleton(const StoredSequence& seq, const std::string& override_path) {
  if (!override_path.empty()) return load_skeleton(override_path);
  return skeleton_from_json_text(seq.meta().skeleton_json);
}

TrackerConfig track_config(const ConfigMap& config, const TrackOptions& o, double fps) {
  TrackerConfig cfg = tracker_config(config);
  if (!config.has("frame_rate_hz")) cfg.frame_rate_hz = fps;
  cfg.gt_2d_lookup = o.gt_2d_lookup;
  if (o.no_ik) cfg.weights.w_ik = 0.0;
  if (o.no_filter) cfg.enable_filters = false;
  if (o.max_iters) {
    if (*o.max_iters < 0) throw ConfigError("--max-iters must be >= 0");
    cfg.solver.max_iterations = *o.max_iters;
  }
  if (o.jacobian == "numeric") {
    cfg.solver.jacobian = JacobianMode::numeric;
  } else if (o.jacobian == "analytic") {
    cfg.solver.jacobian = JacobianMode::analytic;
  } else if (!o.jacobian.empty()) {
    throw ConfigError("--jacobian must be 'analytic' or 'numeric'");
  }
  return cfg;
}

// Bone lengths averaged over the first frames' decoded poses, scaled to the
// user's height.
Skeleton calibrate_from_maps(const StoredSequence& seq, const Skeleton& topology, double height_mm,
                             int frames) {
  if (height_mm <= 0.0) throw ConfigError("--height-mm must be positive");
  if (frames <= 0) throw ConfigError("--calibration-frames must be positive");
  auto in = seq.open_maps();
  std::vector<LocalPose3D> preds;
  const int n = std::min(frames, seq.meta().frames);
  for (int f = 0; f < n; ++f) {
    const MapStack maps = StoredSequence::next_maps(in, topology.joint_count());
    const Decoded d = decode(maps, topology.root());
    if (d.keypoints.visible_count() == topology.joint_count()) preds.push_back(d.local);
  }
  if (preds.empty()) throw DataError("no fully visible frame available for calibration");
  return calibrate(topology, preds, height_mm);
}

int cmd_track(const TrackOptions& o, std::ostream& out) {
  const ConfigMap config = load_config(o.common);
  if (o.max_flagged < 0.0 || o.max_flagged > 1.0) throw ConfigError("--max-flagged must be in [0, 1]");
  if (o.warmup < 0) throw ConfigError("--warmup must be >= 0");
  const StoredSequence seq(o.in_dir);
  Skeleton skeleton = sequence_skeleton(seq, o.common.skeleton_path);
  const TrackerConfig cfg = track_config(config, o, seq.meta().fps);
  if (o.height_mm) skeleton = calibrate_from_maps(seq, skeleton, *o.height_mm, o.calibration_frames);

  const int n = skeleton.joint_count();
  const auto frames = seq.frames(n);
  auto maps_in = seq.open_maps();
  const fs::path out_dir = o.out_dir.empty() ? seq.dir() : fs::path(o.out_dir);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create " + out_dir.string() + ": " + ec.message());
  auto poses = open_out(out_dir / kPosesFile);

  SequenceTracker tracker(skeleton, seq.meta().camera, cfg);
  PoseSequence pred, gt;
  int flagged = 0;
  for (const auto& f : frames) {
    const MapStack maps = StoredSequence::next_maps(maps_in, n);
    FrameInput input{maps, CropTransform(f.box, f.crop_px), f.gt.timestamp_s, f.gt_keypoints_frame};
    const FrameOutput result = tracker.process(input);
    poses << pose_record(result) << '\n';
    pred.push_back(result.global_positions);
    gt.push_back(f.gt.joints);
    if (result.fit.flagged()) ++flagged;
  }
  if (!poses) throw DataError("failed writing " + (out_dir / kPosesFile).string());

  const auto warm = static_cast<std::size_t>(o.warmup);
  if (pred.size() > warm + 2) {
    const EvalReport report = evaluate(tail(pred, warm), tail(gt, warm), skeleton);
    write_text(out_dir / "report.json", report_to_json(report));
    out << "mpjpe_mm " << report.mpjpe_mm << " pck150 " << report.pck150 << " auc " << report.auc
        << " jitter " << report.jitter_mm_per_frame2 << '\n';
  }
  out << "tracked " << frames.size() << " frames, " << flagged << " flagged\n";
  const double fraction = frames.empty() ? 0.0 : static_cast<double>(flagged) / frames.size();
  if (fraction > o.max_flagged) {
    throw FlaggedFramesError(std::to_string(flagged) + " of " + std::to_string(frames.size()) +
                             " frames flagged by the solver");
  }
  return kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalOptions {
  std::string pred_path;
  std::string gt_path;
  std::string skeleton_path;
  std::string out_path;
  std::string csv_path;
  int warmup = 0;
};

int cmd_eval(const EvalOptions& o, std::ostream& out) {
  if (o.warmup < 0) throw ConfigError("--warmup must be >= 0");
  const Skeleton skeleton = load_skeleton(o.skeleton_path);
  const auto w = static_cast<std::size_t>(o.warmup);
  const PoseSequence pred = tail(read_joint_sequence(o.pred_path), w);
  const PoseSequence gt = tail(read_joint_sequence(o.gt_path), w);
  if (pred.size() != gt.size()) {
    throw DataError("prediction has " + std::to_string(pred.size()) + " frames, ground truth " +
                    std::to_string(gt.size()));
  }
  EvalReport report;
  try {
    report = evaluate(pred, gt, skeleton);
  } catch (const ContractError& e) {
    throw DataError(e.what());
  }
  const std::string text = report_to_json(report);
  if (o.out_path.empty()) {
    out << text;
  } else {
    write_text(o.out_path, text);
  }
  if (!o.csv_path.empty()) write_text(o.csv_path, errors_to_csv(pred, gt, skeleton));
  return kExitOk;
}

// ---------------------------------------------------------------- bench

struct BenchOptions {
  CommonOptions common;
  std::string in_dir;
  std::string out_path;
  std::string jacobian = "both";
  int frames = 300;
  std::optional<int> max_iters;
};

struct StageSamples {
  std::vector<double> decode, filter, retarget, fit, total, iterations;

  void add(const FrameOutput& f) {
    const auto& t = f.timings;
    decode.push_back(t.decode_ms);
    filter.push_back(t.filter_ms);
    retarget.push_back(t.retarget_ms);
    fit.push_back(t.fit_ms);
    total.push_back(t.decode_ms + t.filter_ms + t.retarget_ms + t.fit_ms);
    iterations.push_back(f.fit.iterations);
  }
};

json stage_json(const std::vector<double>& v) {
  return {{"p50_ms", percentile(v, 0.5)}, {"p95_ms", percentile(v, 0.95)}};
}

StageSamples bench_stored(const StoredSequence& seq, const Skeleton& skeleton, const TrackerConfig& cfg,
                          int frames) {
  const int n = skeleton.joint_count();
  const auto records = seq.frames(n);
  if (records.empty()) throw DataError("sequence has no frames");
  StageSamples s;
  // Long benches replay the sequence with a fresh tracker per pass.
  while (static_cast<int>(s.fit.size()) < frames) {
    SequenceTracker tracker(skeleton, seq.meta().camera, cfg);
    auto in = seq.open_maps();
    for (const auto& f : records) {
      if (static_cast<int>(s.fit.size()) >= frames) break;
      const MapStack maps = StoredSequence::next_maps(in, n);
      FrameInput input{maps, CropTransform(f.box, f.crop_px), f.gt.timestamp_s, f.gt_keypoints_frame};
      s.add(tracker.process(input));
    }
  }
  return s;
}

StageSamples bench_synthetic(const Skeleton& skeleton, const ObserveSettings& settings,
                             const TrackerConfig& cfg, int frames) {
  const GeneratedSequence seq = generate(default_motion(skeleton, frames), skeleton);
  SequenceTracker tracker(skeleton, seq.camera, cfg);
  StageSamples s;
  simulate(seq, skeleton, reference_noise(), settings, [&](const GtFrame& gt, const Observation& obs) {
    s.add(tracker.process({obs.maps, obs.crop, gt.timestamp_s, obs.gt_keypoints_frame}));
  });
  return s;
}

int cmd_bench(const BenchOptions& o, std::ostream& out) {
  const ConfigMap config = load_config(o.common);
  if (o.frames < 300) throw ConfigError("--frames must be at least 300");
  std::vector<JacobianMode> modes;
  if (o.jacobian == "analytic" || o.jacobian == "both") modes.push_back(JacobianMode::analytic);
  if (o.jacobian == "numeric" || o.jacobian == "both") modes.push_back(JacobianMode::numeric);
  if (modes.empty()) throw ConfigError("--jacobian must be 'analytic', 'numeric' or 'both'");

  std::optional<StoredSequence> seq;
  if (!o.in_dir.empty()) seq.emplace(o.in_dir);
  const Skeleton skeleton = seq ? sequence_skeleton(*seq, o.common.skeleton_path)
                                : load_skeleton(o.common.skeleton_path);

  json report;
  report["frames"] = o.frames;
  report["source"] = seq ? o.in_dir : std::string("synthetic default motion, reference noise");
  for (JacobianMode mode : modes) {
    TrackerConfig cfg = tracker_config(config);
    if (seq && !config.has("frame_rate_hz")) cfg.frame_rate_hz = seq->meta().fps;
    cfg.solver.jacobian = mode;
    if (o.max_iters) {
      if (*o.max_iters < 0) throw ConfigError("--max-iters must be >= 0");
      cfg.solver.max_iterations = *o.max_iters;
    }
    const StageSamples s = seq ? bench_stored(*seq, skeleton, cfg, o.frames)
                               : bench_synthetic(skeleton, observe_settings(config), cfg, o.frames);
    double iters = 0.0;
    for (double i : s.iterations) iters += i;
    json entry;
    entry["decode"] = stage_json(s.decode);
    entry["filter"] = stage_json(s.filter);
    entry["retarget"] = stage_json(s.retarget);
    entry["fit"] = stage_json(s.fit);
    entry["total"] = stage_json(s.total);
    entry["mean_iterations"] = iters / static_cast<double>(s.iterations.size());
    report[mode == JacobianMode::analytic ? "analytic" : "numeric"] = entry;
  }
  const std::string text = report.dump(2) + "\n";
  if (o.out_path.empty()) {
    out << text;
  } else {
    write_text(o.out_path, text);
  }
  return kExitOk;
}

void print_error(std::ostream& err, const char* kind, int code, const std::string& message) {
  err << json{{"error", kind}, {"exit_code", code}, {"message", message}}.dump() << '\n';
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Real-time style 3D pose tracking from heatmaps and location-maps"};
  app.name("posefit");
  app.require_subcommand(1);

  GenerateOptions gen;
  auto* g = app.add_subcommand("generate", "render a synthetic sequence of network outputs");
  add_common(g, gen.common);
  g->add_option("--out", gen.out_dir, "output directory")->required();
  g->add_option("--motion", gen.motion_path, "motion spec JSON");
  g->add_option("--noise", gen.noise_path, "noise spec JSON");
  g->add_option("--seed", gen.seed, "noise seed");
  g->add_option("--fov-deg", gen.fov_deg, "vertical field of view in degrees");
  g->add_option("--frames", gen.frames, "number of frames");

  TrackOptions trk;
  auto* t = app.add_subcommand("track", "run the tracking pipeline on a generated sequence");
  add_common(t, trk.common);
  t->add_option("--in", trk.in_dir, "sequence directory")->required();
  t->add_option("--out", trk.out_dir, "output directory (default: the input directory)");
  t->add_flag("--gt-2d-lookup", trk.gt_2d_lookup, "use ground-truth 2D keypoints");
  t->add_flag("--no-ik", trk.no_ik, "drop the 3D similarity term");
  t->add_flag("--no-filter", trk.no_filter, "disable all temporal filters");
  t->add_option("--max-iters", trk.max_iters, "solver iteration cap");
  t->add_option("--jacobian", trk.jacobian, "analytic or numeric");
  t->add_option("--height-mm", trk.height_mm, "calibrate bone lengths to this body height");
  t->add_option("--calibration-frames", trk.calibration_frames, "frames averaged for calibration");
  t->add_option("--warmup", trk.warmup, "frames skipped by the report");
  t->add_option("--max-flagged", trk.max_flagged, "flagged-frame fraction that fails the run");

  EvalOptions ev;
  auto* e = app.add_subcommand("eval", "compare predicted and ground-truth joints");
  e->add_option("--pred", ev.pred_path, "JSON-lines file with a 'joints' array per frame")->required();
  e->add_option("--gt", ev.gt_path, "JSON-lines file with a 'joints' array per frame")->required();
  e->add_option("--skeleton", ev.skeleton_path, "skeleton JSON file");
  e->add_option("--out", ev.out_path, "report file (default: stdout)");
  e->add_option("--csv", ev.csv_path, "per-frame per-joint errors");
  e->add_option("--warmup", ev.warmup, "leading frames to skip");

  BenchOptions bn;
  auto* b = app.add_subcommand("bench", "per-stage timing percentiles");
  add_common(b, bn.common);
  b->add_option("--in", bn.in_dir, "sequence directory (default: synthetic)");
  b->add_option("--out", bn.out_path, "report file (default: stdout)");
  b->add_option("--jacobian", bn.jacobian, "analytic, numeric or both");
  b->add_option("--frames", bn.frames, "frames to time (>= 300)");
  b->add_option("--max-iters", bn.max_iters, "solver iteration cap");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& h) {
    return app.exit(h, out, err);
  } catch (const CLI::CallForAllHelp& h) {
    return app.exit(h, out, err);
  } catch (const CLI::ParseError& pe) {
    print_error(err, "usage", kExitConfig, pe.what());
    return kExitConfig;
  }

  try {
    if (*g) return cmd_generate(gen, out);
    if (*t) return cmd_track(trk, out);
    if (*e) return cmd_eval(ev, out);
    return cmd_bench(bn, out);
  } catch (const ConfigError& ex) {
    print_error(err, "config", kExitConfig, ex.what());
    return kExitConfig;
  } catch (const DataError& ex) {
    print_error(err, "data", kExitData, ex.what());
    return kExitData;
  } catch (const FlaggedFramesError& ex) {
    print_error(err, "flagged", kExitFlagged, ex.what());
    return kExitFlagged;
  } catch (const ContractError& ex) {
    print_error(err, "data", kExitData, ex.what());
    return kExitData;
  }
}

}  // namespace posefit
