#pragma once

// Reconstruction, gender and matching losses. Batched forms take [N, ...]
// tensors and average the per-sample loss over N; with N = 1 they are the
// per-sample losses.

#include <vector>

#include "sanet/data.hpp"
#include "sanet/ops.hpp"

namespace sanet {

struct LossWeights {
  double lambda_D = 1.0;  // pre-training only
  double lambda_G = 1.0;
  double lambda_M = 1.0;
};

/// Sum over pixels of the cross-entropy between x and its reconstruction.
template <typename T>
BasicTensor<T> loss_JD(const BasicTensor<T>& x, const BasicTensor<T>& x_sm);

/// S(y, p_sm) + S(1 - y, p_op). y, p_sm, p_op: [N, 1] (y holds 0/1 labels).
template <typename T>
BasicTensor<T> loss_JG(const BasicTensor<T>& y, const BasicTensor<T>& p_sm, const BasicTensor<T>& p_op);

/// Squared Euclidean distance between descriptors [N, D].
template <typename T>
BasicTensor<T> loss_JM(const BasicTensor<T>& e_x, const BasicTensor<T>& e_sm);

/// lambda_G * jg + lambda_M * jm. Only the SM/OP-derived terms enter; the
/// reconstruction term belongs to pre-training.
template <typename T>
BasicTensor<T> loss_total(const BasicTensor<T>& jg, const BasicTensor<T>& jm, const LossWeights& w);

/// Scalar conveniences.
double loss_JG(Gender y, double p_sm, double p_op);

/// loss_JG taking pre-sigmoid classifier scores.
template <typename T>
BasicTensor<T> loss_JG_logits(const BasicTensor<T>& y, const BasicTensor<T>& z_sm, const BasicTensor<T>& z_op);
double loss_JM(const std::vector<double>& e_x, const std::vector<double>& e_sm);
double loss_total(double jg, double jm, const LossWeights& w);

/// Column of 0/1 labels [N, 1].
template <typename T>
BasicTensor<T> label_column(const std::vector<Gender>& genders, bool flipped = false);

}  // namespace sanet
