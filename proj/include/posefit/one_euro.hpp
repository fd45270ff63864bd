#pragma once

#include <span>
#include <vector>

namespace posefit {

struct OneEuroParams {
  double fc_min = 1.0;    // Hz
  double beta = 0.0;      // per unit of signal speed
  double d_cutoff = 1.0;  // Hz, derivative low-pass

  void validate() const;
};

enum class FilterStage { keypoints, local3d, global3d };

// Per-stage defaults: keypoints (1.7, 0.3), root-relative 3D (0.8, 0.4),
// fitted global 3D (20, 0.4); derivative cutoff 1 Hz throughout.
OneEuroParams default_params(FilterStage stage);

/// Multi-channel 1-Euro filter. Each channel keeps its own previous
/// estimate and derivative; all channels share one clock.
class OneEuroFilter {
 public:
  OneEuroFilter(OneEuroParams params, std::size_t channels);

  // Filters one sample per channel at time t (seconds, strictly increasing).
  // Channels with active[i] == false pass their input through and reset, so
  // they restart from their next sample.
  std::vector<double> step(std::span<const double> sample, double t,
                           const std::vector<bool>* active = nullptr);

  void reset();
  const OneEuroParams& params() const { return params_; }
  std::size_t channels() const { return value_.size(); }

 private:
  OneEuroParams params_;
  std::vector<double> value_;
  std::vector<double> derivative_;
  std::vector<double> last_time_;
  std::vector<bool> primed_;
  double last_t_ = 0.0;
  bool started_ = false;
};

// 1 / (1 + tau / dt) with tau = 1 / (2 pi cutoff).
double smoothing_factor(double cutoff_hz, double dt);

}  // namespace posefit
