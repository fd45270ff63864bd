#include "posefit/one_euro.hpp"

#include <cmath>
#include <numbers>

#include "posefit/error.hpp"

namespace posefit {

using detail::require;

void OneEuroParams::validate() const {
  require(fc_min > 0.0, "1-Euro fc_min must be positive");
  require(beta >= 0.0, "1-Euro beta must be non-negative");
  require(d_cutoff > 0.0, "1-Euro derivative cutoff must be positive");
}

OneEuroParams default_params(FilterStage stage) {
  switch (stage) {
    case FilterStage::keypoints:
      return {1.7, 0.3, 1.0};
    case FilterStage::local3d:
      return {0.8, 0.4, 1.0};
    case FilterStage::global3d:
      return {20.0, 0.4, 1.0};
  }
  return {};
}

double smoothing_factor(double cutoff_hz, double dt) {
  const double tau = 1.0 / (2.0 * std::numbers::pi * cutoff_hz);
  return 1.0 / (1.0 + tau / dt);
}

OneEuroFilter::OneEuroFilter(OneEuroParams params, std::size_t channels)
    : params_(params),
      value_(channels, 0.0),
      derivative_(channels, 0.0),
      last_time_(channels, 0.0),
      primed_(channels, false) {
  params_.validate();
}

void OneEuroFilter::reset() {
  std::fill(primed_.begin(), primed_.end(), false);
  started_ = false;
}

std::vector<double> OneEuroFilter::step(std::span<const double> sample, double t,
                                        const std::vector<bool>* active) {
  require(sample.size() == value_.size(), "filter sample width mismatch");
  require(!active || active->size() == value_.size(), "filter mask width mismatch");
  require(!started_ || t > last_t_, "filter timestamps must be strictly increasing");
  started_ = true;
  last_t_ = t;

  std::vector<double> out(sample.begin(), sample.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (active && !(*active)[i]) {
      primed_[i] = false;
      continue;
    }
    if (!primed_[i]) {
      value_[i] = sample[i];
      derivative_[i] = 0.0;
      last_time_[i] = t;
      primed_[i] = true;
      continue;
    }
    const double dt = t - last_time_[i];
    const double dx = (sample[i] - value_[i]) / dt;
    const double ad = smoothing_factor(params_.d_cutoff, dt);
    derivative_[i] = ad * dx + (1.0 - ad) * derivative_[i];
    const double cutoff = params_.fc_min + params_.beta * std::abs(derivative_[i]);
    const double a = smoothing_factor(cutoff, dt);
    value_[i] = a * sample[i] + (1.0 - a) * value_[i];
    last_time_[i] = t;
    out[i] = value_[i];
  }
  return out;
}

}  // namespace posefit
