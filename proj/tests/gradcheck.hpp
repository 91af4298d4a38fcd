#pragma once

#include "dagan/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace dagan::testing {

/// Builds a scalar loss from tape variables holding the inputs.
using LossBuilder = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Largest relative disagreement between the tape gradient of every input
/// entry and its central finite difference.
inline double max_gradient_error(const LossBuilder& f, std::vector<Mat> inputs, double step = 1e-5) {
  auto eval = [&] {
    Tape t;
    std::vector<Var> v;
    for (const auto& x : inputs) v.push_back(t.variable(x));
    return t.value(f(t, v))(0, 0);
  };
  std::vector<Mat> analytic;
  {
    Tape t;
    std::vector<Var> v;
    for (const auto& x : inputs) v.push_back(t.variable(x));
    t.backward(f(t, v));
    for (Var x : v) analytic.push_back(t.grad(x));
  }
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (Index i = 0; i < inputs[k].size(); ++i) {
      double& x = inputs[k].data()[i];
      const double old = x;
      x = old + step;
      const double up = eval();
      x = old - step;
      const double down = eval();
      x = old;
      const double fd = (up - down) / (2.0 * step);
      const double an = analytic[k].data()[i];
      const double scale = std::max({std::abs(fd), std::abs(an), 1e-7});
      worst = std::max(worst, std::abs(fd - an) / scale);
    }
  }
  return worst;
}

/// Fixed random linear read-out to a scalar, so every output entry carries a
/// distinct weight in the loss.
inline Var project(Tape& t, Var x, Rng& rng) {
  const Mat& v = t.value(x);
  std::normal_distribution<double> n01;
  Mat w(v.cols(), 1);
  for (Index i = 0; i < w.size(); ++i) w.data()[i] = n01(rng);
  Var out = dense(t, x, t.constant(std::move(w)), t.constant(Mat::Zero(1, 1)));
  return sum(t, out);
}

inline Mat random_mat(Index rows, Index cols, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n01;
  Mat m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = scale * n01(rng);
  return m;
}

}  // namespace dagan::testing
