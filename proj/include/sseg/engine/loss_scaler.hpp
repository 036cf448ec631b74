#pragma once

#include <cstdint>

namespace sseg {

struct LossScalerOptions {
  double initial_scale = 1024.0;
  double growth_factor = 2.0;
  double backoff_factor = 0.5;
  std::int64_t growth_interval = 2000;
  double max_scale = 65536.0;
  double min_scale = 1.0 / 16.0;
};

/// Dynamic loss scale for half-precision training. A step whose unscaled gradients are not all
/// finite is skipped and the scale backs off; after `growth_interval` consecutive applied steps
/// the scale grows (up to max_scale) and the counter restarts.
class LossScaler {
 public:
  explicit LossScaler(LossScalerOptions options = {});

  double scale() const { return scale_; }
  std::int64_t good_steps() const { return good_steps_; }
  const LossScalerOptions& options() const { return options_; }

  /// Records one step's outcome and returns whether its update should be applied.
  /// Throws ScaleUnderflow when backing off would drop the scale below min_scale.
  bool update(bool gradients_finite);

  void restore(double scale, std::int64_t good_steps);

 private:
  LossScalerOptions options_;
  double scale_;
  std::int64_t good_steps_ = 0;
};

}  // namespace sseg
