#include "posefit/fitting.hpp"

#include <Eigen/Cholesky>
#include <chrono>
#include <cmath>
#include <limits>
#include <vector>

#include "posefit/error.hpp"

namespace posefit {

using detail::require;

void EnergyWeights::validate() const {
  require(w_ik >= 0.0 && w_proj >= 0.0 && w_smooth >= 0.0 && w_depth >= 0.0,
          "energy weights must be non-negative");
}

namespace {

constexpr double kReferenceFrameInterval = 1.0 / 30.0;

Eigen::VectorXd to_params(const Pose& pose) {
  Eigen::VectorXd x(pose.theta.size() + 3);
  x << pose.theta, pose.d;
  return x;
}

Pose from_params(const Eigen::VectorXd& x) {
  Pose p;
  p.theta = x.head(x.size() - 3);
  p.d = x.tail<3>();
  return p;
}

bool ik_active(const Observations& obs, int j) {
  return obs.keypoints.visible[j] && obs.local_valid[j];
}

void check_observations(const Observations& obs, const Skeleton& skeleton) {
  const int n = skeleton.joint_count();
  require(obs.keypoints.size() == n && static_cast<int>(obs.keypoints.visible.size()) == n,
          "observation keypoints do not match skeleton");
  require(static_cast<int>(obs.local.positions.size()) == n &&
              static_cast<int>(obs.local_valid.size()) == n,
          "observation 3D pose does not match skeleton");
}

// Residuals (and optionally their analytic Jacobian) in a fixed row layout.
void evaluate(const Pose& pose, const Observations& obs, const EnergyWeights& w,
              const FitContext& ctx, double min_depth, Eigen::VectorXd& r, Eigen::MatrixXd* jac,
              EnergyTerms* terms, bool* behind) {
  const Skeleton& sk = ctx.skeleton;
  const int n = sk.joint_count();
  const int params = 3 * n + 3;

  Eigen::MatrixXd fk_jac;
  const Points3 p = jac ? forward_kinematics(sk, pose, fk_jac) : forward_kinematics(sk, pose);

  int ik_rows = 0, proj_rows = 0;
  for (int j = 0; j < n; ++j) {
    if (ik_active(obs, j)) ik_rows += 3;
    if (obs.keypoints.visible[j]) proj_rows += 2;
  }
  const bool has_acc = ctx.previous && ctx.before_previous;
  const bool has_vel = ctx.previous.has_value();
  const int rows = ik_rows + proj_rows + (has_acc ? 3 * n : 0) + (has_vel ? n : 0);
  r.resize(rows);
  if (jac) jac->setZero(rows, params);

  const double s_ik = std::sqrt(w.w_ik);
  const double s_proj = std::sqrt(w.w_proj);
  const double dt_ratio = kReferenceFrameInterval / ctx.frame_interval_s;
  const double s_smooth = std::sqrt(w.w_smooth) * dt_ratio * dt_ratio;
  const double s_depth = std::sqrt(w.w_depth) * dt_ratio;
  EnergyTerms t;
  bool clamped_any = false;
  int row = 0;

  for (int j = 0; j < n; ++j) {
    if (!ik_active(obs, j)) continue;
    const Vec3 e = s_ik * ((p[j] - pose.d) - obs.local.positions[j]);
    r.segment<3>(row) = e;
    t.ik += e.squaredNorm();
    if (jac) {
      jac->block(row, 0, 3, 3 * n) = s_ik * fk_jac.block(3 * j, 0, 3, 3 * n);
      // p_j and d move together under d, so the d columns vanish.
    }
    row += 3;
  }

  const double f = ctx.camera.focal_px;
  for (int j = 0; j < n; ++j) {
    if (!obs.keypoints.visible[j]) continue;
    bool clamped = false;
    const Vec2 uv = ctx.camera.project_clamped(p[j], min_depth, &clamped);
    clamped_any = clamped_any || clamped;
    const Vec2 e = s_proj * (uv - obs.keypoints.location[j]);
    r.segment<2>(row) = e;
    t.proj += e.squaredNorm();
    if (jac) {
      const double z = clamped ? min_depth : p[j].z();
      Eigen::Matrix<double, 2, 3> dproj;
      dproj << f / z, 0.0, clamped ? 0.0 : -f * p[j].x() / (z * z),
               0.0, f / z, clamped ? 0.0 : -f * p[j].y() / (z * z);
      jac->block(row, 0, 2, params) = s_proj * dproj * fk_jac.middleRows(3 * j, 3);
    }
    row += 2;
  }

  if (has_acc) {
    const Points3& p1 = *ctx.previous;
    const Points3& p2 = *ctx.before_previous;
    for (int j = 0; j < n; ++j) {
      const Vec3 e = s_smooth * (p[j] - 2.0 * p1[j] + p2[j]);
      r.segment<3>(row) = e;
      t.smooth += e.squaredNorm();
      if (jac) jac->block(row, 0, 3, params) = s_smooth * fk_jac.middleRows(3 * j, 3);
      row += 3;
    }
  }

  if (has_vel) {
    const Points3& p1 = *ctx.previous;
    for (int j = 0; j < n; ++j) {
      const double e = s_depth * (p[j].z() - p1[j].z());
      r(row) = e;
      t.depth += e * e;
      if (jac) jac->row(row) = s_depth * fk_jac.row(3 * j + 2);
      ++row;
    }
  }

  if (terms) *terms = t;
  if (behind) *behind = clamped_any;
}

Eigen::MatrixXd numeric_jacobian(const Pose& pose, const Observations& obs, const EnergyWeights& w,
                                 const FitContext& ctx, double min_depth, double h) {
  const Eigen::VectorXd x = to_params(pose);
  Eigen::VectorXd r0;
  evaluate(pose, obs, w, ctx, min_depth, r0, nullptr, nullptr, nullptr);
  Eigen::MatrixXd jac(r0.size(), x.size());
  Eigen::VectorXd rp, rm;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    evaluate(from_params(xp), obs, w, ctx, min_depth, rp, nullptr, nullptr, nullptr);
    evaluate(from_params(xm), obs, w, ctx, min_depth, rm, nullptr, nullptr, nullptr);
    jac.col(i) = (rp - rm) / (2.0 * h);
  }
  return jac;
}

// Each residual row touches only one joint's ancestors and the root
// translation, so J^T J and J^T r are accumulated over row nonzeros.
void normal_equations(const Eigen::MatrixXd& jac, const Eigen::VectorXd& r, Eigen::MatrixXd& a,
                      Eigen::VectorXd& g) {
  const Eigen::Index cols = jac.cols();
  a.setZero(cols, cols);
  g.setZero(cols);
  std::vector<Eigen::Index> nz;
  nz.reserve(cols);
  for (Eigen::Index i = 0; i < jac.rows(); ++i) {
    nz.clear();
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (jac(i, c) != 0.0) nz.push_back(c);
    }
    for (std::size_t u = 0; u < nz.size(); ++u) {
      const double ju = jac(i, nz[u]);
      g(nz[u]) += ju * r(i);
      for (std::size_t v = 0; v <= u; ++v) a(nz[u], nz[v]) += ju * jac(i, nz[v]);
    }
  }
  a.triangularView<Eigen::StrictlyUpper>() = a.transpose();
}

}  // namespace

EnergyEvaluation energy(const Pose& pose, const Observations& obs, const EnergyWeights& weights,
                        const FitContext& ctx, double min_depth_mm) {
  weights.validate();
  check_observations(obs, ctx.skeleton);
  require(ctx.frame_interval_s > 0.0, "frame interval must be positive");
  require(obs.keypoints.visible_count() >= kMinVisibleJoints, "fewer than 4 visible joints");
  EnergyEvaluation out;
  evaluate(pose, obs, weights, ctx, min_depth_mm, out.residuals, nullptr, &out.terms,
           &out.behind_camera);
  return out;
}

Eigen::MatrixXd energy_jacobian(const Pose& pose, const Observations& obs,
                                const EnergyWeights& weights, const FitContext& ctx,
                                JacobianMode mode, const SolverOptions& options) {
  check_observations(obs, ctx.skeleton);
  if (mode == JacobianMode::numeric) {
    return numeric_jacobian(pose, obs, weights, ctx, options.min_depth_mm, options.numeric_step);
  }
  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  evaluate(pose, obs, weights, ctx, options.min_depth_mm, r, &jac, nullptr, nullptr);
  return jac;
}

FitResult fit_frame(const Observations& obs, const EnergyWeights& weights, const FitContext& ctx,
                    const Pose& init, const SolverOptions& options) {
  weights.validate();
  check_observations(obs, ctx.skeleton);
  require(ctx.frame_interval_s > 0.0, "frame interval must be positive");
  require(init.theta.size() == 3 * ctx.skeleton.joint_count() && init.is_finite(),
          "initial pose is invalid");

  FitResult result;
  result.pose = init;
  if (obs.keypoints.visible_count() < kMinVisibleJoints) {
    result.rejected = true;
    return result;
  }

  const double min_depth = options.min_depth_mm;
  const bool analytic = options.jacobian == JacobianMode::analytic;
  auto eval_with_jacobian = [&](const Pose& pose, Eigen::VectorXd& r, Eigen::MatrixXd& jac) {
    if (analytic) {
      evaluate(pose, obs, weights, ctx, min_depth, r, &jac, nullptr, nullptr);
    } else {
      evaluate(pose, obs, weights, ctx, min_depth, r, nullptr, nullptr, nullptr);
      jac = numeric_jacobian(pose, obs, weights, ctx, min_depth, options.numeric_step);
    }
  };

  Eigen::VectorXd x = to_params(init);
  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  eval_with_jacobian(init, r, jac);
  double e = r.squaredNorm();
  result.energy_trace.push_back(e);
  double lambda = options.initial_lambda;

  Eigen::VectorXd r_trial;
  Eigen::MatrixXd a;
  Eigen::VectorXd g;
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    normal_equations(jac, r, a, g);
    if (g.lpNorm<Eigen::Infinity>() < options.gradient_tolerance) {
      result.converged = true;
      break;
    }
    const Eigen::VectorXd damping = a.diagonal().cwiseMax(1e-6);
    ++result.iterations;

    bool accepted = false;
    bool stop = false;
    while (!accepted) {
      Eigen::MatrixXd h = a;
      h.diagonal() += lambda * damping;
      const Eigen::VectorXd delta = h.ldlt().solve(-g);
      // Step tolerance is relative to the parameter norm, which the root
      // translation (metres away) dominates.
      if (!delta.allFinite() ||
          delta.norm() < options.step_tolerance * (x.norm() + options.step_tolerance)) {
        result.converged = delta.allFinite();
        stop = true;
        break;
      }
      const Eigen::VectorXd x_trial = x + delta;
      const Pose trial = from_params(x_trial);
      evaluate(trial, obs, weights, ctx, min_depth, r_trial, nullptr, nullptr, nullptr);
      const double e_trial = r_trial.squaredNorm();
      if (std::isfinite(e_trial) && e_trial < e) {
        stop = e - e_trial <= options.function_tolerance * e;
        result.converged = stop;
        x = x_trial;
        e = e_trial;
        lambda = std::max(lambda / options.lambda_factor, 1e-15);
        eval_with_jacobian(trial, r, jac);
        result.energy_trace.push_back(e);
        accepted = true;
      } else {
        lambda *= options.lambda_factor;
        if (lambda > options.max_lambda) {
          result.diverged = true;
          stop = true;
          break;
        }
      }
    }
    if (stop) break;
  }

  result.pose = from_params(x);
  Eigen::VectorXd r_final;
  evaluate(result.pose, obs, weights, ctx, min_depth, r_final, nullptr, &result.terms,
           &result.behind_camera);
  return result;
}

RetargetResult retarget(const LocalPose3D& local, const std::vector<bool>& valid,
                        const Skeleton& skeleton) {
  const int n = skeleton.joint_count();
  require(static_cast<int>(local.positions.size()) == n && static_cast<int>(valid.size()) == n,
          "retarget input does not match skeleton");
  RetargetResult out;
  out.local.positions.assign(n, Vec3::Zero());
  out.valid = valid;
  out.substituted.assign(n, false);
  const int root = skeleton.root();
  out.valid[root] = true;

  for (int j : skeleton.topological_order()) {
    if (j == root) continue;
    const int par = skeleton.parent(j);
    // Directions always come from the input positions, so a substituted
    // parent does not bend its children.
    Vec3 dir = Vec3::Zero();
    if (valid[j] && out.valid[par]) dir = local.positions[j] - local.positions[par];
    const double len = dir.norm();
    if (len > 1e-9) {
      dir /= len;
    } else {
      dir = skeleton.rest_direction(j);
      out.substituted[j] = true;
      if (!out.valid[par]) out.valid[j] = false;
    }
    out.local.positions[j] = out.local.positions[par] + skeleton.bone_length(j) * dir;
  }
  return out;
}

LocalPose3D retarget(const LocalPose3D& local, const Skeleton& skeleton) {
  return retarget(local, std::vector<bool>(skeleton.joint_count(), true), skeleton).local;
}

SequenceTracker::SequenceTracker(Skeleton skeleton, CameraModel camera, TrackerConfig config)
    : skeleton_(std::move(skeleton)),
      camera_(camera),
      config_(config),
      keypoint_filter_(config.keypoint_filter, 2 * skeleton_.joint_count()),
      local_filter_(config.local_filter, 3 * skeleton_.joint_count()),
      global_filter_(config.global_filter, 3 * skeleton_.joint_count()) {
  config_.weights.validate();
  require(config_.frame_rate_hz > 0.0, "frame rate must be positive");
  require(config_.nominal_depth_mm > 0.0, "nominal depth must be positive");
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

template <int D, class Points>
std::vector<double> flatten(const Points& pts) {
  std::vector<double> out;
  out.reserve(D * pts.size());
  for (const auto& p : pts) {
    for (int i = 0; i < D; ++i) out.push_back(p(i));
  }
  return out;
}

template <int D, class Points>
void unflatten(const std::vector<double>& v, Points& pts) {
  for (std::size_t j = 0; j < pts.size(); ++j) {
    for (int i = 0; i < D; ++i) pts[j](i) = v[D * j + i];
  }
}

std::vector<bool> expand_mask(const std::vector<bool>& mask, int width) {
  std::vector<bool> out;
  out.reserve(mask.size() * width);
  for (bool m : mask) out.insert(out.end(), width, m);
  return out;
}

}  // namespace

FrameOutput SequenceTracker::process(const FrameInput& input) {
  const int n = skeleton_.joint_count();
  require(input.maps.joint_count() == n, "map stack joint count does not match skeleton");
  FrameOutput out;
  out.frame = frame_;
  out.timestamp_s = input.timestamp_s.value_or(frame_ / config_.frame_rate_hz);
  const int root = skeleton_.root();

  auto t0 = Clock::now();
  const Decoded decoded = decode(input.maps, root, {config_.subcell_refinement});
  out.raw_keypoints = input.crop.to_frame(decoded.keypoints);
  out.raw_local = decoded.local;
  out.timings.decode_ms = elapsed_ms(t0);

  t0 = Clock::now();
  Keypoints2D keypoints = out.raw_keypoints;
  if (config_.gt_2d_lookup) {
    if (!input.gt_keypoints_frame) throw DataError("ground-truth 2D lookup needs GT keypoints");
    keypoints = *input.gt_keypoints_frame;
    require(keypoints.size() == n, "GT keypoint count does not match skeleton");
  }
  if (config_.enable_filters) {
    const auto mask = expand_mask(keypoints.visible, 2);
    unflatten<2>(keypoint_filter_.step(flatten<2>(keypoints.location), out.timestamp_s, &mask),
                 keypoints.location);
  }
  out.timings.filter_ms = elapsed_ms(t0);

  t0 = Clock::now();
  Lookup lookup = decode_at(input.maps, input.crop.to_crop(keypoints), root);
  out.timings.decode_ms += elapsed_ms(t0);

  t0 = Clock::now();
  if (config_.enable_filters) {
    const auto mask = expand_mask(lookup.valid, 3);
    unflatten<3>(local_filter_.step(flatten<3>(lookup.local.positions), out.timestamp_s, &mask),
                 lookup.local.positions);
  }
  out.timings.filter_ms += elapsed_ms(t0);

  t0 = Clock::now();
  const RetargetResult retargeted = retarget(lookup.local, lookup.valid, skeleton_);
  Observations obs{keypoints, retargeted.local, retargeted.valid};
  for (int j = 0; j < n; ++j) {
    if (retargeted.substituted[j]) obs.local_valid[j] = false;
  }
  out.timings.retarget_ms = elapsed_ms(t0);

  Pose init;
  if (last_pose_) {
    init = *last_pose_;
  } else {
    init = Pose::zero(n);
    const Vec2 ray = keypoints.visible[root] ? keypoints.location[root] : camera_.principal_point;
    init.d = camera_.backproject(ray, config_.nominal_depth_mm);
  }
  FitContext ctx{skeleton_, camera_, previous_, before_previous_, 1.0 / config_.frame_rate_hz};

  t0 = Clock::now();
  out.fit = fit_frame(obs, config_.weights, ctx, init, config_.solver);
  out.timings.fit_ms = elapsed_ms(t0);
  out.pose = out.fit.pose;
  last_pose_ = out.pose;

  Points3 fitted = forward_kinematics(skeleton_, out.pose);
  before_previous_ = previous_;
  previous_ = fitted;

  t0 = Clock::now();
  if (config_.enable_filters) {
    unflatten<3>(global_filter_.step(flatten<3>(fitted), out.timestamp_s), fitted);
  }
  out.timings.filter_ms += elapsed_ms(t0);
  out.global_positions = fitted;
  out.local = to_local(skeleton_, fitted);
  ++frame_;
  return out;
}

std::vector<FrameOutput> track_sequence(const std::vector<FrameInput>& frames, const Skeleton& skeleton,
                                        const CameraModel& camera, const TrackerConfig& config) {
  require(!frames.empty(), "track_sequence needs at least one frame");
  SequenceTracker tracker(skeleton, camera, config);
  std::vector<FrameOutput> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(tracker.process(f));
  return out;
}

}  // namespace posefit
