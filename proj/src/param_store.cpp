#include "sanet/param_store.hpp"

#include <fmt/format.h>

#include <cmath>
#include <cstring>
#include <numbers>
#include <stdexcept>

namespace sanet {

template <typename T>
void BasicParamStore<T>::add(std::string name, BasicTensor<T> tensor, bool trainable) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  tensor.set_requires_grad(trainable);
  index_.emplace(name, entries_.size());
  entries_.push_back(Entry{std::move(name), std::move(tensor), trainable});
}

template <typename T>
const BasicTensor<T>& BasicParamStore<T>::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
  return entries_[it->second].tensor;
}

template <typename T>
BasicTensor<T>& BasicParamStore<T>::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
  return entries_[it->second].tensor;
}

template <typename T>
bool BasicParamStore<T>::trainable(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
  return entries_[it->second].trainable;
}

template <typename T>
void BasicParamStore<T>::set_trainable(const std::string& name, bool on) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
  auto& e = entries_[it->second];
  e.trainable = on;
  e.tensor.set_requires_grad(on);
}

template <typename T>
void BasicParamStore<T>::set_all_trainable(bool on) {
  for (auto& e : entries_) {
    e.trainable = on;
    e.tensor.set_requires_grad(on);
  }
}

template <typename T>
std::size_t BasicParamStore<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

template <typename T>
void BasicParamStore<T>::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

template <typename T>
std::uint64_t BasicParamStore<T>::fingerprint() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& e : entries_) {
    mix(e.name.data(), e.name.size());
    for (auto d : e.tensor.shape()) mix(&d, sizeof d);
    mix(e.tensor.values().data(), e.tensor.numel() * sizeof(T));
  }
  return h;
}

template class BasicParamStore<float>;
template class BasicParamStore<double>;

double standard_normal(std::mt19937_64& rng) {
  const double u1 = 1.0 - uniform01(rng);  // (0,1]
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Tensor he_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<float> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<float>((2.0 * uniform01(rng) - 1.0) * limit);
  return Tensor(std::move(shape), std::move(v));
}

void Adam::step(ParamStore& params) {
  for (const auto& e : params.entries()) {
    if (e.trainable && !e.tensor.has_grad()) {
      throw std::logic_error(fmt::format("adam: trainable parameter '{}' has no gradient", e.name));
    }
  }
  ++step_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (auto& e : params.entries()) {
    if (!e.trainable) continue;
    auto& mom = moments_[e.name];
    const std::size_t n = e.tensor.numel();
    if (mom.m.size() != n) {
      mom.m.assign(n, 0.0);
      mom.v.assign(n, 0.0);
    }
    auto grad = e.tensor.grad();
    auto values = e.tensor.mutable_values();
    for (std::size_t i = 0; i < n; ++i) {
      const double g = grad[i];
      mom.m[i] = b1 * mom.m[i] + (1.0 - b1) * g;
      mom.v[i] = b2 * mom.v[i] + (1.0 - b2) * g * g;
      const double m_hat = mom.m[i] / correction1;
      const double v_hat = mom.v[i] / correction2;
      values[i] = static_cast<float>(values[i] - options_.lr * m_hat / (std::sqrt(v_hat) + options_.eps));
    }
  }
}

}  // namespace sanet
