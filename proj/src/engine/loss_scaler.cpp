#include "sseg/engine/loss_scaler.hpp"

#include <algorithm>
#include <string>

#include "sseg/core/errors.hpp"

namespace sseg {

LossScaler::LossScaler(LossScalerOptions options) : options_(options), scale_(options.initial_scale) {
  check(options_.initial_scale > 0.0 && options_.min_scale > 0.0 && options_.growth_interval >= 1,
        ErrorCode::ConfigError, "invalid loss scaler settings");
}

bool LossScaler::update(bool gradients_finite) {
  if (!gradients_finite) {
    good_steps_ = 0;
    const double next = scale_ * options_.backoff_factor;
    check(next >= options_.min_scale, ErrorCode::ScaleUnderflow,
          "loss scale would drop to " + std::to_string(next) + ", below the floor " +
              std::to_string(options_.min_scale) + "; gradients keep overflowing");
    scale_ = next;
    return false;
  }
  if (++good_steps_ >= options_.growth_interval) {
    scale_ = std::min(scale_ * options_.growth_factor, options_.max_scale);
    good_steps_ = 0;
  }
  return true;
}

void LossScaler::restore(double scale, std::int64_t good_steps) {
  check(scale > 0.0 && good_steps >= 0, ErrorCode::CorruptFile, "invalid saved loss scale state");
  scale_ = scale;
  good_steps_ = good_steps;
}

}  // namespace sseg
