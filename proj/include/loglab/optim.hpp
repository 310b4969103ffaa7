#pragma once

#include "loglab/tensor.hpp"

namespace loglab::nn {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// One AdamW update with decoupled weight decay and bias-corrected moments.
/// Every parameter must carry a gradient; throws NumericError naming the
/// first one that does not.
void adamw_step(ParamStore& store, double lr, const AdamWConfig& config = {});

/// One-cycle schedule: cosine warm-up from max_lr/div_factor to max_lr over
/// the first pct_start of the steps, then cosine decay to
/// max_lr/final_div_factor at the last step.
struct OneCycleSchedule {
  double max_lr = 5e-4;
  long total_steps = 2;
  double pct_start = 0.3;
  double div_factor = 25.0;
  double final_div_factor = 1e4;

  /// Throws ConfigError if the shape parameters are invalid.
  void validate() const;
};

/// Learning rate at `step` (0-based). Throws ConfigError if step is outside
/// [0, total_steps).
double onecycle_lr(const OneCycleSchedule& schedule, long step);

}  // namespace loglab::nn
