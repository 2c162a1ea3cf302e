#pragma once

// Loss semantics against closed-form values and naive loops.

#include <cmath>
#include <random>
#include <type_traits>

#include "sanet/losses.hpp"
#include "support/check_list.hpp"

namespace sanet::testing {

// Per-pixel cross-entropy written out directly.
inline double naive_cross_entropy(double t, double p) {
  p = std::clamp(p, kBceEpsilon, 1.0 - kBceEpsilon);
  return -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
}

inline CheckList loss_semantics_checks() {
  using D = BasicTensor<double>;
  CheckList c;
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.02, 0.98);

  // J_G: both objectives satisfied.
  c.expect(loss_JG(Gender::Male, 1.0 - 1e-12, 1e-12) < 1e-6, "J_G near zero when SM is right and OP is flipped");
  c.expect(loss_JG(Gender::Male, 1.0, 0.0) < 1e-6, "J_G at the clamp limits");
  c.near(loss_JG(Gender::Male, 0.5, 0.5), 2 * std::log(2.0), 1e-12, "J_G at one half");
  c.expect(loss_JG(Gender::Male, 0.1, 0.9) > 4.0, "J_G large when both objectives fail");
  for (int i = 0; i < 50; ++i) {
    const double a = u(rng), b = u(rng);
    for (Gender y : {Gender::Male, Gender::Female}) {
      const Gender flip = y == Gender::Male ? Gender::Female : Gender::Male;
      c.near(loss_JG(y, a, b), loss_JG(flip, 1 - a, 1 - b), 1e-12, "J_G label symmetry");
      c.near(loss_JG(y, a, b),
             naive_cross_entropy(label(y), a) + naive_cross_entropy(1 - label(y), b), 1e-12, "J_G oracle");
    }
  }
  // Logit form agrees with the probability form.
  for (int i = 0; i < 20; ++i) {
    const double zs = 8 * (u(rng) - 0.5), zo = 8 * (u(rng) - 0.5);
    const auto y = label_column<double>({Gender::Female});
    const double viaLogits = loss_JG_logits(y, D({1, 1}, {zs}), D({1, 1}, {zo})).item();
    const double viaProb = loss_JG(Gender::Female, 1 / (1 + std::exp(-zs)), 1 / (1 + std::exp(-zo)));
    c.near(viaLogits, viaProb, 1e-9, "J_G logits vs probabilities");
  }
  // Gradient signs for y = 1.
  {
    D ps({1, 1}, {0.6}, true), po({1, 1}, {0.3}, true);
    loss_JG(label_column<double>({Gender::Male}), ps, po).backward();
    c.expect(ps.grad()[0] < 0, "dJ_G/dp_sm negative for y=1");
    c.expect(po.grad()[0] > 0, "dJ_G/dp_op positive for y=1");
  }

  // J_D: formula, perfect binary reconstruction, and minimum at the target.
  c.near(loss_JD(D::full({1, 2, 2}, 0.5), D::full({1, 2, 2}, 0.5)).item(), 4 * std::log(2.0), 1e-12, "J_D at one half");
  {
    std::vector<double> bits(64), near(64);
    for (std::size_t i = 0; i < bits.size(); ++i) {
      bits[i] = static_cast<double>(rng() & 1);
      near[i] = bits[i] == 1.0 ? 1.0 - kBceEpsilon : kBceEpsilon;
    }
    c.expect(loss_JD(D({1, 8, 8}, bits), D({1, 8, 8}, near)).item() < 1e-4, "J_D of a binary image at its clamp");
    c.expect(loss_JD(D({1, 8, 8}, bits), D({1, 8, 8}, bits)).item() < 1e-4, "J_D of a binary image on itself");
  }
  {
    std::vector<double> x(64);
    for (auto& v : x) v = u(rng);
    const D xt({1, 8, 8}, x);
    const double at_x = loss_JD(xt, xt).item();
    double naive = 0.0;
    for (double v : x) naive += naive_cross_entropy(v, v);
    c.near(at_x, naive, 1e-9, "J_D oracle");
    for (double eps : {1e-3, -1e-3, 1e-4, -1e-4}) {
      std::vector<double> shifted(x);
      for (auto& v : shifted) v += eps;
      const double excess = loss_JD(xt, D({1, 8, 8}, shifted)).item() - at_x;
      c.expect(excess >= 0.0, "J_D minimal at the target");
      c.expect(excess < 64 * 50 * eps * eps, "J_D excess over the minimum is second order");
    }
    for (double shift : {0.01, -0.01, 0.05}) {
      std::vector<double> shifted(x);
      for (auto& v : shifted) v += shift;
      c.expect(loss_JD(xt, D({1, 8, 8}, shifted)).item() > at_x, "J_D grows under a constant shift");
    }
  }

  // J_M: hand cases and a naive loop.
  c.expect(loss_JM({0.3, -1.0, 2.0}, {0.3, -1.0, 2.0}) == 0.0, "J_M of identical descriptors");
  c.near(loss_JM({1, 0}, {0, 1}), 2.0, 0.0, "J_M of orthogonal unit vectors");
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> a(37), b(37);
    double naive = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = 4 * u(rng) - 2;
      b[i] = 4 * u(rng) - 2;
      naive += (a[i] - b[i]) * (a[i] - b[i]);
    }
    c.near(loss_JM(a, b), naive, 1e-9, "J_M oracle");
  }

  // J_total: weighted sum of J_G and J_M only.
  c.near(loss_total(1, 1, LossWeights{}), 2.0, 0.0, "J_total with unit weights");
  c.near(loss_total(0.7, 3.5, {.lambda_D = 1, .lambda_G = 0, .lambda_M = 1}), 3.5, 0.0, "J_total with lambda_G = 0");
  c.near(loss_total(1, 1, {.lambda_D = 1, .lambda_G = 2, .lambda_M = 3}), 5.0, 0.0, "J_total weighted");
  c.near(loss_total(0.4, 0.9, {.lambda_D = 1000, .lambda_G = 1, .lambda_M = 1}), 1.3, 1e-12,
         "J_total ignores lambda_D");
  const double jg = 0.37, jm = 1.9;
  c.near(loss_total(jg, jm, {.lambda_D = 0, .lambda_G = 2.5, .lambda_M = 0.5}),
         2.5 * loss_total(jg, jm, {.lambda_D = 0, .lambda_G = 1, .lambda_M = 0}) +
             0.5 * loss_total(jg, jm, {.lambda_D = 0, .lambda_G = 0, .lambda_M = 1}),
         1e-12, "J_total linear in the weights");
  // Only two loss terms can be passed: nothing for J_D or a neutral output.
  c.expect(!std::is_invocable_v<decltype(static_cast<double (*)(double, double, const LossWeights&)>(&loss_total)),
                                double, double, double, const LossWeights&>,
           "J_total takes exactly two terms");
  return c;
}

}  // namespace sanet::testing
