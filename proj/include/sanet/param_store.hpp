#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "sanet/tensor.hpp"

namespace sanet {

/// Ordered collection of named parameter tensors. Iteration follows insertion
/// order. Frozen entries have requires_grad off, so gradients flow through
/// them to their inputs but are never stored on them.
template <typename T>
class BasicParamStore {
 public:
  struct Entry {
    std::string name;
    BasicTensor<T> tensor;
    bool trainable = true;
  };

  void add(std::string name, BasicTensor<T> tensor, bool trainable = true);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const BasicTensor<T>& at(const std::string& name) const;
  BasicTensor<T>& at(const std::string& name);
  bool trainable(const std::string& name) const;
  void set_trainable(const std::string& name, bool on);
  void set_all_trainable(bool on);

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t parameter_count() const;

  void zero_grad();

  /// FNV-1a over names, shapes and raw value bytes; trainable flags are not included.
  std::uint64_t fingerprint() const;

  /// Deep copy with values converted to U; trainable flags are preserved.
  template <typename U>
  BasicParamStore<U> cast() const {
    BasicParamStore<U> out;
    for (const auto& e : entries_) out.add(e.name, e.tensor.template cast<U>(), e.trainable);
    return out;
  }

  BasicParamStore clone() const { return cast<T>(); }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

using ParamStore = BasicParamStore<float>;

extern template class BasicParamStore<float>;
extern template class BasicParamStore<double>;

/// Uniform double in [0,1) from the top 53 bits of the generator.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Standard normal via Box-Muller on uniform01.
double standard_normal(std::mt19937_64& rng);

/// He-uniform initialisation: U(-sqrt(6/fan_in), sqrt(6/fan_in)).
Tensor he_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng);

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam over the trainable entries of a ParamStore. Moment buffers are keyed by
/// entry name.
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  /// Applies one update. Throws if a trainable entry carries no gradient.
  void step(ParamStore& params);

  std::int64_t steps() const { return step_; }
  const AdamOptions& options() const { return options_; }
  void set_lr(double lr) { options_.lr = lr; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  AdamOptions options_;
  std::int64_t step_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace sanet
