#include "dagan/tensor.hpp"

#include <cmath>
#include <numeric>

namespace dagan {

Parameter& ParamSet::add(const std::string& id, std::vector<Index> shape) {
  if (shape.empty()) throw UsageError("parameter '" + id + "' needs at least one extent");
  if (params_.count(id)) throw UsageError("duplicate parameter id '" + id + "'");
  Index rows = shape.front();
  Index cols = std::accumulate(shape.begin() + 1, shape.end(), Index{1}, std::multiplies<>());
  Parameter p;
  p.shape = std::move(shape);
  p.value = Mat::Zero(rows, cols);
  p.grad = Mat::Zero(rows, cols);
  return params_.emplace(id, std::move(p)).first->second;
}

Parameter& ParamSet::at(const std::string& id) {
  auto it = params_.find(id);
  if (it == params_.end()) throw UsageError("unknown parameter '" + id + "'");
  return it->second;
}

const Parameter& ParamSet::at(const std::string& id) const {
  auto it = params_.find(id);
  if (it == params_.end()) throw UsageError("unknown parameter '" + id + "'");
  return it->second;
}

void ParamSet::zero_grad() {
  for (auto& [id, p] : params_) p.grad.setZero();
}

Index ParamSet::parameter_count() const {
  Index n = 0;
  for (const auto& [id, p] : params_) n += p.size();
  return n;
}

double ParamSet::grad_norm() const {
  double sq = 0.0;
  for (const auto& [id, p] : params_)
    if (!p.frozen) sq += p.grad.squaredNorm();
  return std::sqrt(sq);
}

void ParamSet::clip_grad_norm(double max_norm) {
  const double norm = grad_norm();
  if (!(norm > max_norm)) return;
  const double scale = max_norm / norm;
  for (auto& [id, p] : params_)
    if (!p.frozen) p.grad *= scale;
}

void ParamSet::set_frozen(const std::string& prefix, bool frozen) {
  for (auto& [id, p] : params_)
    if (id.compare(0, prefix.size(), prefix) == 0) p.frozen = frozen;
}

bool ParamSet::operator==(const ParamSet& other) const {
  if (params_.size() != other.params_.size()) return false;
  auto a = params_.begin();
  auto b = other.params_.begin();
  for (; a != params_.end(); ++a, ++b) {
    if (a->first != b->first || a->second.shape != b->second.shape) return false;
    if (a->second.value != b->second.value) return false;
  }
  return true;
}

void glorot_uniform(Parameter& p, Index fan_in, Index fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  for (Index i = 0; i < p.value.rows(); ++i)
    for (Index j = 0; j < p.value.cols(); ++j) p.value(i, j) = dist(rng);
}

}  // namespace dagan
