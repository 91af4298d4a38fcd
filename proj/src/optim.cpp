#include "dagan/optim.hpp"

#include <cmath>

namespace dagan {

void adam_step(ParamSet& params, AdamState& state, const AdamConfig& config, long t) {
  if (t < 1) throw UsageError("adam_step: step index must be >= 1, got " + std::to_string(t));
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
  for (auto& [id, p] : params) {
    if (p.frozen) continue;
    auto [it, fresh] = state.moments.try_emplace(id);
    auto& [m, v] = it->second;
    if (fresh) {
      m = Mat::Zero(p.value.rows(), p.value.cols());
      v = Mat::Zero(p.value.rows(), p.value.cols());
    }
    m = config.beta1 * m + (1.0 - config.beta1) * p.grad;
    v = config.beta2 * v + (1.0 - config.beta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -=
        config.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + config.eps);
  }
}

}  // namespace dagan
