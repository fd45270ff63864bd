#include <gtest/gtest.h>

#include <Eigen/Geometry>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "posefit/error.hpp"
#include "posefit/skeleton.hpp"

using namespace posefit;

namespace {

Pose random_pose(const Skeleton& sk, std::mt19937_64& rng, double range = 0.8) {
  std::uniform_real_distribution<double> a(-range, range);
  Pose p = Pose::zero(sk.joint_count());
  for (Eigen::Index i = 0; i < p.theta.size(); ++i) p.theta(i) = a(rng);
  p.d = Vec3(a(rng) * 200.0, a(rng) * 200.0, 4000.0 + a(rng) * 500.0);
  return p;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Skeleton, DefaultTopology) {
  const Skeleton sk = default_skeleton();
  EXPECT_EQ(sk.joint_count(), 21);
  EXPECT_EQ(sk.parent(sk.root()), kNoParent);
  EXPECT_EQ(sk.bone_length(sk.root()), 0.0);
  EXPECT_EQ(evaluation_joints(sk).size(), 14u);
  const auto& order = sk.topological_order();
  std::vector<int> seen(sk.joint_count(), 0);
  for (int j : order) {
    if (j != sk.root()) EXPECT_TRUE(seen[sk.parent(j)]) << sk.name(j);
    seen[j] = 1;
  }
  // Roughly adult proportions.
  EXPECT_GT(sk.rest_height(), 1500.0);
  EXPECT_LT(sk.rest_height(), 1900.0);
}

TEST(Skeleton, RejectsMalformedDefinitions) {
  auto joints = default_skeleton().joints();
  auto bad = joints;
  bad[3].bone_length_mm = 0.0;
  EXPECT_THROW(Skeleton{bad}, ContractError);
  bad = joints;
  bad[3].rest_direction = Vec3(1.0, 1.0, 0.0);
  EXPECT_THROW(Skeleton{bad}, ContractError);
  bad = joints;
  bad[2].parent = kNoParent;
  EXPECT_THROW(Skeleton{bad}, ContractError);
  bad = joints;
  bad[1].parent = 1;
  EXPECT_THROW(Skeleton{bad}, ContractError);
  bad.assign(joints.begin(), joints.begin() + 10);
  EXPECT_THROW(Skeleton{bad}, ContractError);
}

TEST(ForwardKinematics, ZeroRotationsTranslateRestPose) {
  const Skeleton sk = default_skeleton();
  Pose p = Pose::zero(sk.joint_count());
  p.d = Vec3(0.0, 0.0, 3000.0);
  const Points3 fk = forward_kinematics(sk, p);
  const Points3 rest = sk.rest_positions();
  for (int j = 0; j < sk.joint_count(); ++j) {
    EXPECT_NEAR((fk[j] - (rest[j] + p.d)).norm(), 0.0, 1e-9) << sk.name(j);
  }
}

TEST(ForwardKinematics, BoneLengthsArePreserved) {
  const Skeleton sk = default_skeleton();
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Points3 fk = forward_kinematics(sk, random_pose(sk, rng, 2.5));
    for (int j = 0; j < sk.joint_count(); ++j) {
      if (j == sk.root()) continue;
      EXPECT_NEAR((fk[j] - fk[sk.parent(j)]).norm(), sk.bone_length(j), 1e-9);
    }
  }
}

TEST(ForwardKinematics, QuarterTurnAboutXByHand) {
  const Skeleton sk = default_skeleton();
  const int knee = sk.index_of("l_knee");
  const int ankle = sk.index_of("l_ankle");
  const int tip = sk.index_of("l_foot_tip");
  Pose p = Pose::zero(sk.joint_count());
  p.theta.segment<3>(3 * knee) = Vec3(std::numbers::pi / 2.0, 0.0, 0.0);
  const Points3 fk = forward_kinematics(sk, p);
  Mat3 rx;  // rotation by +90 degrees about x
  rx << 1, 0, 0,
        0, 0, -1,
        0, 1, 0;
  const Vec3 ankle_expected = fk[knee] + rx * (sk.bone_length(ankle) * sk.rest_direction(ankle));
  const Vec3 tip_expected = ankle_expected + rx * (sk.bone_length(tip) * sk.rest_direction(tip));
  EXPECT_NEAR((fk[ankle] - ankle_expected).norm(), 0.0, 1e-9);
  EXPECT_NEAR((fk[tip] - tip_expected).norm(), 0.0, 1e-9);
  // The knee itself does not move.
  EXPECT_NEAR((fk[knee] - sk.rest_positions()[knee]).norm(), 0.0, 1e-9);
}

TEST(ForwardKinematics, JacobianMatchesCentralDifferences) {
  const Skeleton sk = default_skeleton();
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    const Pose p = random_pose(sk, rng, 1.5);
    Eigen::MatrixXd jac;
    forward_kinematics(sk, p, jac);
    const int n = sk.joint_count();
    ASSERT_EQ(jac.rows(), 3 * n);
    ASSERT_EQ(jac.cols(), 3 * n + 3);
    const double h = 1e-6;
    for (int c = 0; c < 3 * n + 3; ++c) {
      Pose up = p, down = p;
      if (c < 3 * n) {
        up.theta(c) += h;
        down.theta(c) -= h;
      } else {
        up.d(c - 3 * n) += h;
        down.d(c - 3 * n) -= h;
      }
      const Points3 a = forward_kinematics(sk, up), b = forward_kinematics(sk, down);
      for (int j = 0; j < n; ++j) {
        const Vec3 fd = (a[j] - b[j]) / (2.0 * h);
        EXPECT_NEAR((jac.block<3, 1>(3 * j, c) - fd).norm(), 0.0, 1e-5 * (1.0 + fd.norm()));
      }
    }
  }
}

TEST(So3, ExpMatchesAngleAxisAndRightJacobian) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int i = 0; i < 20; ++i) {
    const Vec3 w(g(rng), g(rng), g(rng));
    const Mat3 ref = Eigen::AngleAxisd(w.norm(), w.normalized()).toRotationMatrix();
    EXPECT_NEAR((exp_so3(w) - ref).norm(), 0.0, 1e-12);
    // Exp(w + dw) ~ Exp(w) Exp(Jr dw)
    const Vec3 dw = 1e-7 * Vec3(g(rng), g(rng), g(rng));
    const Mat3 lhs = exp_so3(w + dw);
    const Mat3 rhs = exp_so3(w) * exp_so3(right_jacobian_so3(w) * dw);
    EXPECT_NEAR((lhs - rhs).norm(), 0.0, 1e-12);
  }
  EXPECT_NEAR((exp_so3(Vec3::Zero()) - Mat3::Identity()).norm(), 0.0, 0.0);
  EXPECT_NEAR((right_jacobian_so3(Vec3::Zero()) - Mat3::Identity()).norm(), 0.0, 0.0);
}

TEST(LocalPose, RootIsOriginAndMatchesFkMinusRoot) {
  const Skeleton sk = default_skeleton();
  const LocalPose3D rest = local_pose_from_global(sk, Pose::zero(sk.joint_count()));
  for (int j = 0; j < sk.joint_count(); ++j) {
    EXPECT_NEAR((rest.positions[j] - sk.rest_positions()[j]).norm(), 0.0, 1e-9);
  }
  std::mt19937_64 rng(6);
  const Pose p = random_pose(sk, rng);
  const LocalPose3D local = local_pose_from_global(sk, p);
  const Points3 fk = forward_kinematics(sk, p);
  EXPECT_EQ(local.positions[sk.root()], Vec3::Zero());
  for (int j = 0; j < sk.joint_count(); ++j) {
    EXPECT_NEAR((local.positions[j] - (fk[j] - fk[sk.root()])).norm(), 0.0, 1e-9);
  }
}

TEST(Calibrate, IdenticalPredictionsKeepProportions) {
  const Skeleton sk = default_skeleton();
  std::vector<double> lengths;
  for (int j = 0; j < sk.joint_count(); ++j) lengths.push_back(j == sk.root() ? 0.0 : 100.0 + 7.0 * j);
  const Skeleton source = sk.with_bone_lengths(lengths);
  const std::vector<LocalPose3D> preds(5, LocalPose3D{source.rest_positions()});
  const Skeleton out = calibrate(sk, preds, 1750.0);
  EXPECT_NEAR(out.rest_height(), 1750.0, 1e-9);
  const int a = sk.index_of("l_knee"), b = sk.index_of("neck");
  EXPECT_NEAR(out.bone_length(a) / out.bone_length(b), source.bone_length(a) / source.bone_length(b), 1e-12);
  for (int j = 0; j < sk.joint_count(); ++j) EXPECT_EQ(out.rest_direction(j), sk.rest_direction(j));
}

TEST(Calibrate, KneeNeckScalesWithHeight) {
  // Height-normalized predictions carry a 920 mm knee-to-neck distance.
  const Skeleton sk = default_skeleton();
  const Skeleton normalized = sk.scaled(kNormalizedKneeNeckMm / sk.knee_neck_height());
  ASSERT_NEAR(normalized.knee_neck_height(), 920.0, 1e-9);
  const std::vector<LocalPose3D> preds{LocalPose3D{normalized.rest_positions()}};
  for (double height : {1500.0, 1700.0, 1900.0}) {
    const Skeleton out = calibrate(sk, preds, height);
    EXPECT_NEAR(out.knee_neck_height(), 920.0 * height / normalized.rest_height(), 1e-9);
  }
}

TEST(Calibrate, AveragingBeatsASingleNoisySample) {
  const Skeleton sk = default_skeleton();
  const int n = sk.joint_count();
  auto noisy = [&](std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 10.0);
    std::vector<double> lengths(n, 0.0);
    for (int j = 0; j < n; ++j) {
      if (j != sk.root()) lengths[j] = sk.bone_length(j) + g(rng);
    }
    return LocalPose3D{sk.with_bone_lengths(lengths).rest_positions()};
  };
  auto error = [&](const Skeleton& s) {
    double e = 0.0;
    for (int j = 0; j < n; ++j) e += std::abs(s.bone_length(j) - sk.bone_length(j));
    return e;
  };
  int wins = 0;
  const int seeds = 200;
  for (int seed = 0; seed < seeds; ++seed) {
    std::mt19937_64 rng(1000 + seed);
    std::vector<LocalPose3D> many;
    for (int i = 0; i < 100; ++i) many.push_back(noisy(rng));
    const LocalPose3D single = noisy(rng);
    const double e_many = error(calibrate(sk, many, sk.rest_height()));
    const double e_one = error(calibrate(sk, {single}, sk.rest_height()));
    wins += e_many < e_one;
  }
  EXPECT_GE(wins, static_cast<int>(0.99 * seeds));
}

TEST(Calibrate, RejectsBadInput) {
  const Skeleton sk = default_skeleton();
  EXPECT_THROW(calibrate(sk, {}, 1700.0), ContractError);
  EXPECT_THROW(calibrate(sk, {LocalPose3D{sk.rest_positions()}}, 0.0), ContractError);
  EXPECT_THROW(calibrate(sk, {LocalPose3D{Points3(3)}}, 1700.0), ContractError);
}

TEST(SkeletonJson, RoundTripAndShippedFile) {
  const Skeleton sk = default_skeleton();
  const Skeleton back = skeleton_from_json_text(skeleton_to_json_text(sk));
  ASSERT_EQ(back.joint_count(), sk.joint_count());
  for (int j = 0; j < sk.joint_count(); ++j) {
    EXPECT_EQ(back.name(j), sk.name(j));
    EXPECT_EQ(back.parent(j), sk.parent(j));
    EXPECT_EQ(back.bone_length(j), sk.bone_length(j));
    EXPECT_NEAR((back.rest_direction(j) - sk.rest_direction(j)).norm(), 0.0, 1e-15);
  }
  const Skeleton shipped = skeleton_from_json_text(read_file(POSEFIT_DATA_DIR "/skeleton_default.json"));
  ASSERT_EQ(shipped.joint_count(), sk.joint_count());
  for (int j = 0; j < sk.joint_count(); ++j) {
    EXPECT_EQ(shipped.name(j), sk.name(j));
    EXPECT_EQ(shipped.parent(j), sk.parent(j));
    EXPECT_NEAR(shipped.bone_length(j), sk.bone_length(j), 1e-9);
    EXPECT_NEAR((shipped.rest_direction(j) - sk.rest_direction(j)).norm(), 0.0, 1e-12);
  }
}

TEST(SkeletonJson, MalformedTextIsADataError) {
  EXPECT_THROW(skeleton_from_json_text("{"), DataError);
  EXPECT_THROW(skeleton_from_json_text("[1, 2]"), DataError);
}
