#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <numbers>

#include "posefit/error.hpp"
#include "posefit/oracle.hpp"

using namespace posefit;

namespace {

bool planes_identical(const Plane& a, const Plane& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

bool maps_identical(const MapStack& a, const MapStack& b) {
  if (a.joint_count() != b.joint_count()) return false;
  for (int j = 0; j < a.joint_count(); ++j) {
    const auto& p = a.joints[j];
    const auto& q = b.joints[j];
    if (!planes_identical(p.heat, q.heat) || !planes_identical(p.x, q.x) ||
        !planes_identical(p.y, q.y) || !planes_identical(p.z, q.z)) {
      return false;
    }
  }
  return true;
}

BoundingBox gt_box(const GtFrame& frame, const CameraModel& camera) {
  return buffered_box(project_keypoints(frame.joints, camera));
}

}  // namespace

TEST(Generate, ZeroAmplitudeIsConstant) {
  const Skeleton sk = default_skeleton();
  MotionSpec spec = default_motion(sk, 20);
  for (auto& s : spec.sinusoids) s.amplitude_rad = Vec3::Zero();
  const GeneratedSequence seq = generate(spec, sk);
  ASSERT_EQ(seq.frames.size(), 20u);
  for (const auto& f : seq.frames) {
    EXPECT_EQ(f.pose.theta, seq.frames[0].pose.theta);
    EXPECT_EQ(f.pose.d, seq.frames[0].pose.d);
    for (int j = 0; j < sk.joint_count(); ++j) EXPECT_EQ(f.joints[j], seq.frames[0].joints[j]);
  }
}

TEST(Generate, FramesFollowTheClosedFormSinusoid) {
  const Skeleton sk = default_skeleton();
  const MotionSpec spec = default_motion(sk, 90);
  const GeneratedSequence seq = generate(spec, sk);
  for (const auto& f : seq.frames) {
    const double t = f.index / 30.0;
    EXPECT_EQ(f.timestamp_s, t);
    for (int j = 0; j < sk.joint_count(); ++j) {
      const auto& s = spec.sinusoids[j];
      const Vec3 expected = spec.base_theta.segment<3>(3 * j) +
                            s.amplitude_rad * std::sin(2.0 * std::numbers::pi * s.frequency_hz * t + s.phase_rad);
      EXPECT_NEAR((f.pose.theta.segment<3>(3 * j) - expected).norm(), 0.0, 1e-15);
    }
    const Points3 fk = forward_kinematics(sk, f.pose);
    for (int j = 0; j < sk.joint_count(); ++j) EXPECT_EQ(f.joints[j], fk[j]);
  }
}

TEST(Generate, CircularRootPathReturnsToStart) {
  RootPath path;
  path.kind = RootPathKind::circle;
  path.origin = Vec3(0.0, 0.0, 5000.0);
  path.radius_mm = 1000.0;
  path.period_s = 10.0;
  EXPECT_NEAR((path.at(0.0) - Vec3(0.0, 0.0, 4000.0)).norm(), 0.0, 1e-12);
  EXPECT_NEAR((path.at(10.0) - path.at(0.0)).norm(), 0.0, 1e-9);
  EXPECT_NEAR((path.at(5.0) - Vec3(0.0, 0.0, 6000.0)).norm(), 0.0, 1e-9);
  for (double t = 0.0; t < 10.0; t += 0.37) EXPECT_NEAR((path.at(t) - path.origin).norm(), 1000.0, 1e-9);

  const Skeleton sk = default_skeleton();
  MotionSpec spec = default_motion(sk, 301);
  spec.root = path;
  const GeneratedSequence seq = generate(spec, sk);
  EXPECT_NEAR((seq.frames.back().pose.d - seq.frames.front().pose.d).norm(), 0.0, 1e-9);

  RootPath line;
  line.kind = RootPathKind::linear;
  line.velocity_mm_s = Vec3(100.0, 0.0, -50.0);
  EXPECT_EQ(line.at(2.0), line.origin + Vec3(200.0, 0.0, -100.0));
}

TEST(Generate, RejectsJointsBehindTheCamera) {
  const Skeleton sk = default_skeleton();
  MotionSpec spec = default_motion(sk, 10);
  spec.root.origin = Vec3(0.0, 0.0, 200.0);
  EXPECT_THROW(generate(spec, sk), ContractError);
  spec = default_motion(sk, 0);
  EXPECT_THROW(generate(spec, sk), ContractError);
  spec = default_motion(sk, 10);
  spec.sinusoids.resize(3);
  EXPECT_THROW(generate(spec, sk), ContractError);
}

TEST(Generate, DefaultMotionStaysInFrame) {
  const Skeleton sk = default_skeleton();
  const GeneratedSequence seq = generate(default_motion(sk), sk);
  for (const auto& f : seq.frames) {
    EXPECT_EQ(project_keypoints(f.joints, seq.camera).visible_count(), sk.joint_count());
  }
}

TEST(NoiseSpecTest, Validation) {
  NoiseSpec n;
  EXPECT_NO_THROW(n.validate());
  EXPECT_NO_THROW(reference_noise().validate());
  n.outlier_prob = 1.5;
  EXPECT_THROW(n.validate(), ContractError);
  n = NoiseSpec{};
  n.kp_jitter_sigma_px = -1.0;
  EXPECT_THROW(n.validate(), ContractError);
  n = NoiseSpec{};
  n.bb_jitter_px = -0.1;
  EXPECT_THROW(n.validate(), ContractError);
}

TEST(NoiseStreamTest, DeterministicAndIndependent) {
  NoiseStream a(7, 3, 2), b(7, 3, 2), c(7, 3, 3), d(7, 4, 2), e(8, 3, 2);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = a.normal();
    EXPECT_EQ(x, b.normal());
    sum += x;
    sq += x * x;
  }
  EXPECT_NE(NoiseStream(7, 3, 2).uniform(), c.uniform());
  EXPECT_NE(NoiseStream(7, 3, 2).uniform(), d.uniform());
  EXPECT_NE(NoiseStream(7, 3, 2).uniform(), e.uniform());
  EXPECT_NEAR(sum / n, 0.0, 0.03);
  EXPECT_NEAR(sq / n, 1.0, 0.03);
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}

TEST(Observe, ZeroNoiseDecodesToGroundTruth) {
  const Skeleton sk = default_skeleton();
  const GeneratedSequence seq = generate(default_motion(sk, 30), sk);
  const GridSpec grid;
  for (const auto& f : seq.frames) {
    const Observation obs = observe(f, sk, seq.camera, gt_box(f, seq.camera), NoiseSpec{});
    const Decoded dec = decode(obs.maps, sk.root(), {false});
    const LocalPose3D local = to_local(sk, f.joints);
    for (int j = 0; j < sk.joint_count(); ++j) {
      ASSERT_TRUE(dec.keypoints.visible[j]);
      const Vec2 err = dec.keypoints.location[j] - obs.gt_keypoints_crop.location[j];
      EXPECT_LE(err.cwiseAbs().maxCoeff(), grid.stride_px / 2 + 1e-9);
      EXPECT_NEAR((dec.local.positions[j] - local.positions[j]).norm(), 0.0, 1e-6);
      const Vec2 back = obs.crop.to_frame(dec.keypoints.location[j]);
      const Vec2 scale = obs.crop.scale();
      EXPECT_LE(std::abs(back.x() - obs.gt_keypoints_frame.location[j].x()), 4.0 * scale.x() + 1e-9);
      EXPECT_LE(std::abs(back.y() - obs.gt_keypoints_frame.location[j].y()), 4.0 * scale.y() + 1e-9);
    }
  }
}

TEST(Observe, FixedSeedIsBitIdentical) {
  const Skeleton sk = default_skeleton();
  const GeneratedSequence seq = generate(default_motion(sk, 5), sk);
  NoiseSpec noise = reference_noise(99);
  noise.bb_jitter_px = 20.0;
  for (const auto& f : seq.frames) {
    const BoundingBox box = gt_box(f, seq.camera);
    const Observation a = observe(f, sk, seq.camera, box, noise);
    const Observation b = observe(f, sk, seq.camera, box, noise);
    EXPECT_TRUE(maps_identical(a.maps, b.maps));
    EXPECT_EQ(a.crop.box().min, b.crop.box().min);
    noise.seed = 100;
    const Observation c = observe(f, sk, seq.camera, box, noise);
    noise.seed = 99;
    EXPECT_FALSE(maps_identical(a.maps, c.maps));
  }
}

TEST(Observe, KeypointJitterMatchesTheNoiseModel) {
  // sigma 5 px: the radial error has mean 5 sqrt(pi / 2) = 6.27 px before
  // quantization to the 8 px grid.
  const Skeleton sk = default_skeleton();
  const GeneratedSequence seq = generate(default_motion(sk, 60), sk);
  NoiseSpec noise;
  noise.kp_jitter_sigma_px = 5.0;
  noise.seed = 3;
  double sum = 0.0;
  int count = 0;
  for (const auto& f : seq.frames) {
    const Observation obs = observe(f, sk, seq.camera, gt_box(f, seq.camera), noise);
    const Decoded dec = decode(obs.maps, sk.root(), {false});
    for (int j = 0; j < sk.joint_count(); ++j) {
      if (!dec.keypoints.visible[j]) continue;
      sum += (dec.keypoints.location[j] - obs.gt_keypoints_crop.location[j]).norm();
      ++count;
    }
  }
  ASSERT_GE(count, 1000);
  const double mean = sum / count;
  EXPECT_GE(mean, 3.0);
  EXPECT_LE(mean, 8.0);
}

TEST(Observe, OffPeakBiasLeavesTheJointSupportAlone) {
  const Skeleton sk = default_skeleton();
  const GeneratedSequence seq = generate(default_motion(sk, 1), sk);
  const GtFrame& f = seq.frames[0];
  NoiseSpec noise;
  noise.offpeak_bias_mm = 100.0;
  const Observation clean = observe(f, sk, seq.camera, gt_box(f, seq.camera), NoiseSpec{});
  const Observation biased = observe(f, sk, seq.camera, gt_box(f, seq.camera), noise);
  const GridSpec& grid = clean.maps.grid;
  int far_changed = 0;
  for (int j = 0; j < sk.joint_count(); ++j) {
    if (j == sk.root()) continue;
    EXPECT_TRUE(planes_identical(clean.maps.joints[j].heat, biased.maps.joints[j].heat));
    const Vec2 center = clean.gt_keypoints_crop.location[j] / grid.stride_px - Vec2(0.5, 0.5);
    const Vec3 bias(biased.maps.joints[j].x(0, 0) - clean.maps.joints[j].x(0, 0),
                    biased.maps.joints[j].y(0, 0) - clean.maps.joints[j].y(0, 0),
                    biased.maps.joints[j].z(0, 0) - clean.maps.joints[j].z(0, 0));
    for (int cy = 0; cy < grid.height; ++cy) {
      for (int cx = 0; cx < grid.width; ++cx) {
        const double dx = biased.maps.joints[j].x(cy, cx) - clean.maps.joints[j].x(cy, cx);
        if ((Vec2(cx, cy) - center).norm() <= 3.0 * kDefaultHeatmapSigmaCells) {
          EXPECT_EQ(dx, 0.0);
        } else {
          EXPECT_NEAR(dx, bias.x(), 1e-9);
          far_changed += dx != 0.0;
        }
      }
    }
    const auto peak = argmax_cell(clean.maps.joints[j].heat);
    ASSERT_TRUE(peak);
    EXPECT_EQ(biased.maps.joints[j].z((*peak)(1), (*peak)(0)), clean.maps.joints[j].z((*peak)(1), (*peak)(0)));
  }
  EXPECT_GT(far_changed, 0);
}

TEST(Observe, OutliersMoveThePeakByTheShift) {
  const Skeleton sk = default_skeleton();
  const GeneratedSequence seq = generate(default_motion(sk, 1), sk);
  const GtFrame& f = seq.frames[0];
  NoiseSpec noise;
  noise.outlier_prob = 1.0;
  noise.outlier_shift_px = 80.0;
  const Observation obs = observe(f, sk, seq.camera, gt_box(f, seq.camera), noise);
  const Decoded dec = decode(obs.maps, sk.root(), {false});
  for (int j = 0; j < sk.joint_count(); ++j) {
    if (!dec.keypoints.visible[j]) continue;
    const double r = (dec.keypoints.location[j] - obs.gt_keypoints_crop.location[j]).norm();
    EXPECT_NEAR(r, 80.0, 2.0 * std::sqrt(2.0) * 4.0 + 1e-9);
  }
}

TEST(Observe, BoxJitterMovesTheCropNotThePerson) {
  const Skeleton sk = default_skeleton();
  const GeneratedSequence seq = generate(default_motion(sk, 20), sk);
  NoiseSpec noise;
  noise.bb_jitter_px = 40.0;
  for (const auto& f : seq.frames) {
    const BoundingBox box = gt_box(f, seq.camera);
    const Observation still = observe(f, sk, seq.camera, box, NoiseSpec{});
    const Observation moved = observe(f, sk, seq.camera, box, noise);
    EXPECT_GT(moved.crop.box().corner_distance(box), 0.0);
    const Keypoints2D a = still.crop.to_frame(decode(still.maps, sk.root(), {false}).keypoints);
    const Keypoints2D b = moved.crop.to_frame(decode(moved.maps, sk.root(), {false}).keypoints);
    const Vec2 bound = 4.0 * (still.crop.scale() + moved.crop.scale());
    for (int j = 0; j < sk.joint_count(); ++j) {
      if (!a.visible[j] || !b.visible[j]) continue;
      EXPECT_LE(std::abs(a.location[j].x() - b.location[j].x()), bound.x() + 1e-9);
      EXPECT_LE(std::abs(a.location[j].y() - b.location[j].y()), bound.y() + 1e-9);
    }
  }
}

TEST(Simulate, SeedsTheBoxFromGroundTruthAndIsDeterministic) {
  const Skeleton sk = default_skeleton();
  const GeneratedSequence seq = generate(default_motion(sk, 15), sk);
  std::vector<MapStack> first, second;
  std::vector<BoundingBox> boxes;
  simulate(seq, sk, reference_noise(5), {}, [&](const GtFrame&, const Observation& o) {
    first.push_back(o.maps);
    boxes.push_back(o.crop.box());
  });
  simulate(seq, sk, reference_noise(5), {}, [&](const GtFrame&, const Observation& o) { second.push_back(o.maps); });
  ASSERT_EQ(first.size(), 15u);
  for (std::size_t i = 0; i < first.size(); ++i) EXPECT_TRUE(maps_identical(first[i], second[i]));
  const BoundingBox expected = propose(std::nullopt, project_keypoints(seq.frames[0].joints, seq.camera),
                                       seq.camera.image_size).box;
  EXPECT_NEAR(boxes[0].corner_distance(expected), 0.0, 1e-9);
}
