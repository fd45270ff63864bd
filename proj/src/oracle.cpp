#include "posefit/oracle.hpp"

#include <cmath>
#include <numbers>

#include "posefit/error.hpp"

namespace posefit {

using detail::require;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

NoiseStream::NoiseStream(std::uint64_t seed, std::uint64_t frame, std::uint64_t stream)
    : engine_(splitmix64(splitmix64(splitmix64(seed) ^ frame) ^ (stream + 0x632BE59BD9B4E019ull))) {}

double NoiseStream::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double NoiseStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  spare_ = radius * std::sin(kTwoPi * u2);
  has_spare_ = true;
  return radius * std::cos(kTwoPi * u2);
}

Vec3 RootPath::at(double t) const {
  switch (kind) {
    case RootPathKind::fixed:
      return origin;
    case RootPathKind::linear:
      return origin + t * velocity_mm_s;
    case RootPathKind::circle: {
      const double a = kTwoPi * t / period_s;
      return origin + radius_mm * Vec3(std::sin(a), 0.0, -std::cos(a));
    }
  }
  return origin;
}

void NoiseSpec::validate() const {
  require(kp_jitter_sigma_px >= 0.0 && depth_noise_sigma_mm >= 0.0, "noise sigmas must be >= 0");
  require(outlier_prob >= 0.0 && outlier_prob <= 1.0, "outlier probability must be in [0, 1]");
  require(outlier_shift_px >= 0.0 && bb_jitter_px >= 0.0 && offpeak_bias_mm >= 0.0,
          "noise magnitudes must be >= 0");
}

NoiseSpec reference_noise(std::uint64_t seed) {
  NoiseSpec n;
  n.kp_jitter_sigma_px = 5.0;
  n.outlier_prob = 0.05;
  n.outlier_shift_px = 80.0;
  n.depth_noise_sigma_mm = 20.0;
  n.offpeak_bias_mm = 100.0;
  n.seed = seed;
  return n;
}

GeneratedSequence generate(const MotionSpec& spec, const Skeleton& skeleton) {
  const int n = skeleton.joint_count();
  require(spec.frames > 0, "motion spec needs at least one frame");
  require(spec.fps > 0.0, "motion spec fps must be positive");
  require(spec.base_theta.size() == 0 || spec.base_theta.size() == 3 * n,
          "base pose does not match skeleton");
  require(spec.sinusoids.empty() || static_cast<int>(spec.sinusoids.size()) == n,
          "sinusoid count does not match skeleton");
  if (spec.root.kind == RootPathKind::circle) {
    require(spec.root.period_s > 0.0, "circular root path needs a positive period");
  }

  GeneratedSequence seq;
  seq.camera = CameraModel::from_vertical_fov(spec.fov_deg, spec.image);
  seq.frames.reserve(spec.frames);
  for (int f = 0; f < spec.frames; ++f) {
    GtFrame frame;
    frame.index = f;
    frame.timestamp_s = f / spec.fps;
    frame.pose = Pose::zero(n);
    if (spec.base_theta.size() > 0) frame.pose.theta = spec.base_theta;
    for (int j = 0; j < static_cast<int>(spec.sinusoids.size()); ++j) {
      const auto& s = spec.sinusoids[j];
      frame.pose.theta.segment<3>(3 * j) +=
          s.amplitude_rad * std::sin(kTwoPi * s.frequency_hz * frame.timestamp_s + s.phase_rad);
    }
    frame.pose.d = spec.root.at(frame.timestamp_s);
    frame.joints = forward_kinematics(skeleton, frame.pose);
    for (int j = 0; j < n; ++j) {
      require(frame.joints[j].z() > 0.0, "motion spec puts joint '" + skeleton.name(j) +
                                             "' behind the camera at frame " + std::to_string(f));
    }
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

MotionSpec default_motion(const Skeleton& skeleton, int frames) {
  MotionSpec spec;
  spec.frames = frames;
  const int n = skeleton.joint_count();
  spec.sinusoids.assign(n, JointSinusoid{});
  auto set = [&](const char* name, Vec3 amplitude, double freq, double phase) {
    spec.sinusoids[skeleton.index_of(name)] = {amplitude, freq, phase};
  };
  const double pi = std::numbers::pi;
  set("pelvis", Vec3(0.05, 0.3, 0.0), 0.2, 0.0);
  set("spine", Vec3(0.15, 0.1, 0.05), 0.4, 0.3);
  set("neck", Vec3(0.1, 0.2, 0.0), 0.3, 1.0);
  set("head", Vec3(0.2, 0.3, 0.1), 0.45, 0.2);
  set("r_shoulder", Vec3(0.5, 0.1, 0.05), 0.6, 0.0);
  set("l_shoulder", Vec3(0.5, 0.1, 0.05), 0.6, pi);
  set("r_elbow", Vec3(0.4, 0.0, 0.0), 0.6, 0.5);
  set("l_elbow", Vec3(0.4, 0.0, 0.0), 0.6, 0.5 + pi);
  set("r_wrist", Vec3(0.2, 0.2, 0.0), 0.8, 0.0);
  set("l_wrist", Vec3(0.2, 0.2, 0.0), 0.8, 1.0);
  set("r_hip", Vec3(0.45, 0.05, 0.03), 0.6, pi);
  set("l_hip", Vec3(0.45, 0.05, 0.03), 0.6, 0.0);
  set("r_knee", Vec3(0.4, 0.0, 0.0), 0.6, pi + 0.6);
  set("l_knee", Vec3(0.4, 0.0, 0.0), 0.6, 0.6);
  set("r_ankle", Vec3(0.2, 0.05, 0.0), 0.6, 0.3);
  set("l_ankle", Vec3(0.2, 0.05, 0.0), 0.6, pi + 0.3);
  // Arms slightly away from the body, elbows a little bent.
  spec.base_theta = Eigen::VectorXd::Zero(3 * n);
  spec.base_theta.segment<3>(3 * skeleton.index_of("r_shoulder")) = Vec3(0.0, 0.0, 0.3);
  spec.base_theta.segment<3>(3 * skeleton.index_of("l_shoulder")) = Vec3(0.0, 0.0, -0.3);
  spec.base_theta.segment<3>(3 * skeleton.index_of("r_elbow")) = Vec3(0.3, 0.0, 0.0);
  spec.base_theta.segment<3>(3 * skeleton.index_of("l_elbow")) = Vec3(0.3, 0.0, 0.0);
  spec.root.kind = RootPathKind::fixed;
  spec.root.origin = Vec3(0.0, 0.0, 4000.0);
  return spec;
}

Keypoints2D project_keypoints(const Points3& joints, const CameraModel& camera) {
  Keypoints2D k;
  const int n = static_cast<int>(joints.size());
  k.location.assign(n, Vec2::Zero());
  k.confidence.assign(n, 0.0);
  k.visible.assign(n, false);
  for (int j = 0; j < n; ++j) {
    if (joints[j].z() <= 0.0) continue;
    const Vec2 uv = camera.project(joints[j]);
    k.location[j] = uv;
    const bool inside = uv.x() >= 0.0 && uv.y() >= 0.0 && uv.x() < camera.image_size.width &&
                        uv.y() < camera.image_size.height;
    k.visible[j] = inside;
    k.confidence[j] = inside ? 1.0 : 0.0;
  }
  return k;
}

Observation observe(const GtFrame& frame, const Skeleton& skeleton, const CameraModel& camera,
                    const BoundingBox& box, const NoiseSpec& noise, const ObserveSettings& settings) {
  noise.validate();
  const int n = skeleton.joint_count();
  require(static_cast<int>(frame.joints.size()) == n, "GT frame does not match skeleton");
  const GridSpec& grid = settings.grid;
  require(std::abs(grid.crop_width_px() - settings.box.crop_px) < 1e-9 &&
              std::abs(grid.crop_height_px() - settings.box.crop_px) < 1e-9,
          "map grid does not cover the crop");

  Observation obs;
  BoundingBox jittered = box;
  if (noise.bb_jitter_px > 0.0) {
    NoiseStream rng(noise.seed, frame.index, n);
    auto jitter = [&] { return noise.bb_jitter_px * (2.0 * rng.uniform() - 1.0); };
    jittered.min += Vec2(jitter(), jitter());
    jittered.max += Vec2(jitter(), jitter());
    if (!jittered.valid()) jittered = box;
  }
  obs.crop = CropTransform(jittered, settings.box.crop_px);
  obs.gt_keypoints_frame = project_keypoints(frame.joints, camera);
  obs.gt_keypoints_crop = obs.crop.to_crop(obs.gt_keypoints_frame);
  for (int j = 0; j < n; ++j) {
    if (!grid.contains(obs.gt_keypoints_crop.location[j])) {
      obs.gt_keypoints_crop.visible[j] = false;
      obs.gt_keypoints_crop.confidence[j] = 0.0;
    }
  }

  const LocalPose3D local = to_local(skeleton, frame.joints);
  Keypoints2D peaks = obs.gt_keypoints_crop;
  std::vector<NoiseStream> streams;
  streams.reserve(n);
  for (int j = 0; j < n; ++j) {
    streams.emplace_back(noise.seed, frame.index, j);
    auto& rng = streams.back();
    Vec2 offset(rng.normal(), rng.normal());
    offset *= noise.kp_jitter_sigma_px;
    const double u = rng.uniform();
    const double angle = kTwoPi * rng.uniform();
    if (u < noise.outlier_prob) {
      offset += noise.outlier_shift_px * Vec2(std::cos(angle), std::sin(angle));
    }
    peaks.location[j] += offset;
  }

  obs.maps = render_gt(peaks, local, grid, settings.sigma_cells);

  const double support = 3.0 * settings.sigma_cells;
  for (int j = 0; j < n; ++j) {
    auto& jm = obs.maps.joints[j];
    if (!peaks.visible[j] || !grid.contains(peaks.location[j])) continue;
    auto& rng = streams[j];
    if (noise.depth_noise_sigma_mm > 0.0) {
      for (Plane* p : {&jm.x, &jm.y, &jm.z}) {
        for (Eigen::Index i = 0; i < p->size(); ++i) {
          p->data()[i] += noise.depth_noise_sigma_mm * rng.normal();
        }
      }
    }
    if (noise.offpeak_bias_mm > 0.0) {
      const Vec3 bias = noise.offpeak_bias_mm * Vec3(rng.normal(), rng.normal(), rng.normal());
      const Vec2 center = obs.gt_keypoints_crop.location[j] / grid.stride_px - Vec2(0.5, 0.5);
      for (int cy = 0; cy < grid.height; ++cy) {
        for (int cx = 0; cx < grid.width; ++cx) {
          if ((Vec2(cx, cy) - center).norm() <= support) continue;
          jm.x(cy, cx) += bias.x();
          jm.y(cy, cx) += bias.y();
          jm.z(cy, cx) += bias.z();
        }
      }
    }
  }
  return obs;
}

void simulate(const GeneratedSequence& sequence, const Skeleton& skeleton, const NoiseSpec& noise,
              const ObserveSettings& settings, const ObservationSink& sink) {
  require(!sequence.frames.empty(), "cannot simulate an empty sequence");
  BoxTracker tracker(sequence.camera.image_size, settings.box);
  const auto first = project_keypoints(sequence.frames.front().joints, sequence.camera);
  tracker.update(first);
  for (const auto& frame : sequence.frames) {
    const Observation obs = observe(frame, skeleton, sequence.camera, *tracker.current(), noise, settings);
    sink(frame, obs);
    const Decoded decoded = decode(obs.maps, skeleton.root());
    tracker.update(obs.crop.to_frame(decoded.keypoints));
  }
}

}  // namespace posefit
