#include "sanet/losses.hpp"

#include <fmt/format.h>

namespace sanet {

template <typename T>
BasicTensor<T> loss_JD(const BasicTensor<T>& x, const BasicTensor<T>& x_sm) {
  if (x.shape() != x_sm.shape()) {
    throw ShapeError(fmt::format("loss_JD: shape mismatch {} vs {}", shape_to_string(x.shape()), shape_to_string(x_sm.shape())));
  }
  const std::size_t n = x.rank() == 4 ? x.dim(0) : 1;
  return scale(binary_cross_entropy(x, x_sm), T(1) / static_cast<T>(n));
}

template <typename T>
BasicTensor<T> loss_JG(const BasicTensor<T>& y, const BasicTensor<T>& p_sm, const BasicTensor<T>& p_op) {
  const std::size_t n = p_sm.dim(0);
  std::vector<T> flipped(y.numel());
  for (std::size_t i = 0; i < flipped.size(); ++i) flipped[i] = T(1) - y.values()[i];
  const BasicTensor<T> y_flipped(y.shape(), std::move(flipped));
  auto total = add(binary_cross_entropy(y, p_sm), binary_cross_entropy(y_flipped, p_op));
  return scale(total, T(1) / static_cast<T>(n));
}

template <typename T>
BasicTensor<T> loss_JG_logits(const BasicTensor<T>& y, const BasicTensor<T>& z_sm, const BasicTensor<T>& z_op) {
  const std::size_t n = z_sm.dim(0);
  std::vector<T> flipped(y.numel());
  for (std::size_t i = 0; i < flipped.size(); ++i) flipped[i] = T(1) - y.values()[i];
  const BasicTensor<T> y_flipped(y.shape(), std::move(flipped));
  auto total = add(binary_cross_entropy_logits(y, z_sm), binary_cross_entropy_logits(y_flipped, z_op));
  return scale(total, T(1) / static_cast<T>(n));
}

template <typename T>
BasicTensor<T> loss_JM(const BasicTensor<T>& e_x, const BasicTensor<T>& e_sm) {
  if (e_x.shape() != e_sm.shape()) {
    throw ShapeError(fmt::format("loss_JM: descriptor shapes differ {} vs {}", shape_to_string(e_x.shape()),
                                 shape_to_string(e_sm.shape())));
  }
  const auto a = e_x.rank() == 2 ? e_x : e_x.reshape(Shape{1, e_x.numel()});
  const auto b = e_sm.rank() == 2 ? e_sm : e_sm.reshape(Shape{1, e_sm.numel()});
  return scale(sum(squared_distance_rows(a, b)), T(1) / static_cast<T>(a.dim(0)));
}

template <typename T>
BasicTensor<T> loss_total(const BasicTensor<T>& jg, const BasicTensor<T>& jm, const LossWeights& w) {
  return add(scale(jg, static_cast<T>(w.lambda_G)), scale(jm, static_cast<T>(w.lambda_M)));
}

template <typename T>
BasicTensor<T> label_column(const std::vector<Gender>& genders, bool flipped) {
  std::vector<T> v(genders.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const int y = label(genders[i]);
    v[i] = static_cast<T>(flipped ? 1 - y : y);
  }
  return BasicTensor<T>(Shape{genders.size(), 1}, std::move(v));
}

double loss_JG(Gender y, double p_sm, double p_op) {
  return loss_JG(label_column<double>({y}), BasicTensor<double>(Shape{1, 1}, {p_sm}),
                 BasicTensor<double>(Shape{1, 1}, {p_op}))
      .item();
}

double loss_JM(const std::vector<double>& e_x, const std::vector<double>& e_sm) {
  if (e_x.size() != e_sm.size()) {
    throw ShapeError(fmt::format("loss_JM: descriptor lengths differ ({} vs {})", e_x.size(), e_sm.size()));
  }
  return loss_JM(BasicTensor<double>(Shape{e_x.size()}, e_x), BasicTensor<double>(Shape{e_sm.size()}, e_sm)).item();
}

double loss_total(double jg, double jm, const LossWeights& w) {
  return loss_total(BasicTensor<double>::scalar(jg), BasicTensor<double>::scalar(jm), w).item();
}

#define SANET_INSTANTIATE_LOSSES(T)                                                                          \
  template BasicTensor<T> loss_JD(const BasicTensor<T>&, const BasicTensor<T>&);                            \
  template BasicTensor<T> loss_JG(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);     \
  template BasicTensor<T> loss_JG_logits(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&); \
  template BasicTensor<T> loss_JM(const BasicTensor<T>&, const BasicTensor<T>&);                            \
  template BasicTensor<T> loss_total(const BasicTensor<T>&, const BasicTensor<T>&, const LossWeights&);     \
  template BasicTensor<T> label_column<T>(const std::vector<Gender>&, bool);

SANET_INSTANTIATE_LOSSES(float)
SANET_INSTANTIATE_LOSSES(double)

#undef SANET_INSTANTIATE_LOSSES

}  // namespace sanet
