#pragma once

#include "dagan/tensor.hpp"

#include <map>
#include <string>

namespace dagan {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moment estimates, keyed like the ParamSet they track.
struct AdamState {
  std::map<std::string, std::pair<Mat, Mat>> moments;
};

/// One bias-corrected Adam update at step `t` (1-based). Frozen parameters are
/// left untouched and their moments are not advanced.
void adam_step(ParamSet& params, AdamState& state, const AdamConfig& config, long t);

/// Stateful wrapper that owns the moments and the step counter.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  void step(ParamSet& params) { adam_step(params, state_, config_, ++t_); }
  long steps() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  AdamState state_;
  long t_ = 0;
};

}  // namespace dagan
