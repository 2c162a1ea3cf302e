#pragma once

// Differentiable primitives. Image tensors are laid out as [N, C, H, W].

#include <cstdint>
#include <random>
#include <vector>

#include "sanet/tensor.hpp"

namespace sanet {

/// Prediction clamp applied inside binary_cross_entropy.
inline constexpr double kBceEpsilon = 1e-7;

/// Stride-1 convolution with zero "same" padding. Kernel spatial dims must be odd.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernel, const BasicTensor<T>& bias);

template <typename T>
BasicTensor<T> leaky_relu(const BasicTensor<T>& x, T slope);

/// 2x2 mean pooling with stride 2 (trailing odd row/column dropped).
template <typename T>
BasicTensor<T> avg_pool2d(const BasicTensor<T>& input);

/// 2x2 max pooling with stride 2. With ceil_mode an odd trailing row/column is
/// pooled against a replica of itself, so odd sizes round up.
template <typename T>
BasicTensor<T> max_pool2d(const BasicTensor<T>& input, bool ceil_mode);

/// Nearest-neighbour upsampling by 2 in both spatial dims.
template <typename T>
BasicTensor<T> upsample_nearest2d(const BasicTensor<T>& input);

/// input[N,D] * weights[D,M] + bias[M].
template <typename T>
BasicTensor<T> dense(const BasicTensor<T>& input, const BasicTensor<T>& weights, const BasicTensor<T>& bias);

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x);

/// Sum over elements of -t*ln(p) - (1-t)*ln(1-p) with p clamped to
/// [kBceEpsilon, 1-kBceEpsilon]. The target is treated as a constant; the
/// gradient is evaluated at the clamped prediction.
template <typename T>
BasicTensor<T> binary_cross_entropy(const BasicTensor<T>& target, const BasicTensor<T>& prediction);

/// Same value as binary_cross_entropy(target, sigmoid(logits)), but the
/// gradient sigmoid(z) - t stays alive where the sigmoid saturates.
template <typename T>
BasicTensor<T> binary_cross_entropy_logits(const BasicTensor<T>& target, const BasicTensor<T>& logits);

/// Concatenates two [N,C,H,W] tensors along C.
template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// [N, ...] -> [N, prod(...)].
template <typename T>
BasicTensor<T> flatten(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor);

template <typename T>
BasicTensor<T> add_scalar(const BasicTensor<T>& x, T offset);

/// Sum of all elements as a [1] tensor.
template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x);

/// Row-wise squared Euclidean distance of two [N,D] tensors, shape [N].
template <typename T>
BasicTensor<T> squared_distance_rows(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// Sum over rows of -log softmax(logits)[label]. logits: [N, C].
template <typename T>
BasicTensor<T> softmax_cross_entropy(const BasicTensor<T>& logits, const std::vector<std::size_t>& labels);

/// Inverted dropout: kept units are scaled by 1/(1-p).
template <typename T>
BasicTensor<T> dropout(const BasicTensor<T>& x, T p, std::mt19937_64& rng);

}  // namespace sanet
