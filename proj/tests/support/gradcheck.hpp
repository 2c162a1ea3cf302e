#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "sanet/tensor.hpp"

namespace sanet::testing {

using DTensor = BasicTensor<double>;

inline DTensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                             bool requires_grad = true) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return DTensor(std::move(shape), std::move(v), requires_grad);
}

// Norm-wise relative error between analytic and central-difference gradients,
// worst over all inputs.
inline double gradient_error(const std::vector<DTensor*>& inputs, const std::function<DTensor()>& loss,
                             double h = 1e-6) {
  for (auto* t : inputs) t->zero_grad();
  loss().backward();
  double worst = 0.0;
  for (auto* t : inputs) {
    std::vector<double> analytic(t->numel(), 0.0);
    if (t->has_grad()) analytic.assign(t->grad().begin(), t->grad().end());
    double diff = 0.0, na = 0.0, nn = 0.0;
    auto v = t->mutable_values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double saved = v[i];
      v[i] = saved + h;
      const double up = loss().item();
      v[i] = saved - h;
      const double down = loss().item();
      v[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      diff += (analytic[i] - numeric) * (analytic[i] - numeric);
      na += analytic[i] * analytic[i];
      nn += numeric * numeric;
    }
    const double denom = std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
    worst = std::max(worst, std::sqrt(diff) / denom);
  }
  return worst;
}

}  // namespace sanet::testing
