#include "sanet/ops.hpp"

#include <Eigen/Core>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace sanet {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

template <typename T>
using Node = detail::Node<T>;

void require_rank(const Shape& s, std::size_t rank, const char* op, const char* arg) {
  if (s.size() != rank) {
    throw ShapeError(fmt::format("{}: {} must have rank {}, got {}", op, arg, rank, shape_to_string(s)));
  }
}

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ShapeError(fmt::format("{}: shape mismatch {} vs {}", op, shape_to_string(a), shape_to_string(b)));
}

// Unfolds one [C,H,W] image into a [C*kh*kw, H*W] patch matrix for a
// stride-1 same-padded convolution.
template <typename T>
void im2col(const T* img, std::size_t C, std::size_t H, std::size_t W, std::size_t kh, std::size_t kw, T* cols) {
  const long ph = static_cast<long>(kh / 2), pw = static_cast<long>(kw / 2);
  const long h = static_cast<long>(H), w = static_cast<long>(W);
  std::size_t row = 0;
  for (std::size_t c = 0; c < C; ++c) {
    const T* plane = img + c * H * W;
    for (std::size_t i = 0; i < kh; ++i) {
      for (std::size_t j = 0; j < kw; ++j, ++row) {
        T* dst = cols + row * H * W;
        const long di = static_cast<long>(i) - ph, dj = static_cast<long>(j) - pw;
        for (long y = 0; y < h; ++y) {
          const long sy = y + di;
          T* out = dst + y * w;
          if (sy < 0 || sy >= h) {
            std::fill(out, out + w, T(0));
            continue;
          }
          const T* src = plane + sy * w;
          const long x0 = std::max(0L, -dj), x1 = std::min(w, w - dj);
          std::fill(out, out + x0, T(0));
          std::copy(src + x0 + dj, src + x1 + dj, out + x0);
          std::fill(out + x1, out + w, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, std::size_t C, std::size_t H, std::size_t W, std::size_t kh, std::size_t kw, T* img) {
  const long ph = static_cast<long>(kh / 2), pw = static_cast<long>(kw / 2);
  const long h = static_cast<long>(H), w = static_cast<long>(W);
  std::size_t row = 0;
  for (std::size_t c = 0; c < C; ++c) {
    T* plane = img + c * H * W;
    for (std::size_t i = 0; i < kh; ++i) {
      for (std::size_t j = 0; j < kw; ++j, ++row) {
        const T* src = cols + row * H * W;
        const long di = static_cast<long>(i) - ph, dj = static_cast<long>(j) - pw;
        for (long y = 0; y < h; ++y) {
          const long sy = y + di;
          if (sy < 0 || sy >= h) continue;
          T* dst = plane + sy * w;
          const T* in = src + y * w;
          const long x0 = std::max(0L, -dj), x1 = std::min(w, w - dj);
          for (long x = x0; x < x1; ++x) dst[x + dj] += in[x];
        }
      }
    }
  }
}

template <typename T>
BasicTensor<T> elementwise(const BasicTensor<T>& x, auto fwd, auto deriv) {
  std::vector<T> out(x.numel());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
  return BasicTensor<T>::make_result(x.shape(), std::move(out), {x}, [deriv](Node<T>& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] * deriv(p.values[i], self.values[i]);
  });
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernel, const BasicTensor<T>& bias) {
  require_rank(input.shape(), 4, "conv2d", "input");
  require_rank(kernel.shape(), 4, "conv2d", "kernel");
  require_rank(bias.shape(), 1, "conv2d", "bias");
  const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::size_t K = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(1) != C) {
    throw ShapeError(fmt::format("conv2d: kernel input channels (dim 1) = {} but input channels (dim 1) = {}",
                                 kernel.dim(1), C));
  }
  if (kh % 2 == 0 || kw % 2 == 0) {
    throw ShapeError(fmt::format("conv2d: kernel spatial dims (dims 2,3) must be odd, got {}x{}", kh, kw));
  }
  if (bias.dim(0) != K) {
    throw ShapeError(fmt::format("conv2d: bias length (dim 0) = {} but kernel outputs (dim 0) = {}", bias.dim(0), K));
  }
  const std::size_t HW = H * W, patch = C * kh * kw;
  std::vector<T> out(N * K * HW);
  std::vector<T> cols(patch * HW);
  ConstMatMap<T> kmat(kernel.values().data(), K, patch);
  auto bv = bias.values();
  for (std::size_t n = 0; n < N; ++n) {
    im2col(input.values().data() + n * C * HW, C, H, W, kh, kw, cols.data());
    MatMap<T> o(out.data() + n * K * HW, K, HW);
    o.noalias() = kmat * ConstMatMap<T>(cols.data(), patch, HW);
    for (std::size_t k = 0; k < K; ++k) o.row(k).array() += bv[k];
  }
  return BasicTensor<T>::make_result(
      Shape{N, K, H, W}, std::move(out), {input, kernel, bias},
      [N, C, H, W, K, kh, kw, HW, patch](Node<T>& self) {
        auto& in = *self.parents[0];
        auto& ker = *self.parents[1];
        auto& b = *self.parents[2];
        std::vector<T> cols(patch * HW);
        ConstMatMap<T> kmat(ker.values.data(), K, patch);
        if (ker.needs_grad) ker.ensure_grad();
        if (in.needs_grad) in.ensure_grad();
        if (b.needs_grad) b.ensure_grad();
        for (std::size_t n = 0; n < N; ++n) {
          ConstMatMap<T> g(self.grad.data() + n * K * HW, K, HW);
          if (b.needs_grad) {
            // Plain loop: Eigen's vectorised sum peels by address, which breaks run-to-run equality.
            for (std::size_t k = 0; k < K; ++k) {
              T acc = 0;
              for (std::size_t i = 0; i < HW; ++i) acc += g(k, i);
              b.grad[k] += acc;
            }
          }
          if (ker.needs_grad) {
            im2col(in.values.data() + n * C * HW, C, H, W, kh, kw, cols.data());
            MatMap<T> gk(ker.grad.data(), K, patch);
            gk.noalias() += g * ConstMatMap<T>(cols.data(), patch, HW).transpose();
          }
          if (in.needs_grad) {
            MatMap<T> gc(cols.data(), patch, HW);
            gc.noalias() = kmat.transpose() * g;
            col2im_add(cols.data(), C, H, W, kh, kw, in.grad.data() + n * C * HW);
          }
        }
      });
}

template <typename T>
BasicTensor<T> leaky_relu(const BasicTensor<T>& x, T slope) {
  return elementwise(
      x, [slope](T v) { return v >= T(0) ? v : slope * v; },
      [slope](T in, T) { return in >= T(0) ? T(1) : slope; });
}

template <typename T>
BasicTensor<T> avg_pool2d(const BasicTensor<T>& input) {
  require_rank(input.shape(), 4, "avg_pool2d", "input");
  const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (H < 2 || W < 2) throw ShapeError("avg_pool2d: spatial dims must be >= 2, got " + shape_to_string(input.shape()));
  const std::size_t OH = H / 2, OW = W / 2;
  std::vector<T> out(N * C * OH * OW);
  auto v = input.values();
  for (std::size_t p = 0; p < N * C; ++p) {
    const T* src = v.data() + p * H * W;
    T* dst = out.data() + p * OH * OW;
    for (std::size_t y = 0; y < OH; ++y) {
      for (std::size_t x = 0; x < OW; ++x) {
        const T* r0 = src + 2 * y * W + 2 * x;
        const T* r1 = r0 + W;
        dst[y * OW + x] = (r0[0] + r0[1] + r1[0] + r1[1]) * T(0.25);
      }
    }
  }
  return BasicTensor<T>::make_result(Shape{N, C, OH, OW}, std::move(out), {input},
                                     [N, C, H, W, OH, OW](Node<T>& self) {
                                       auto& p = *self.parents[0];
                                       p.ensure_grad();
                                       for (std::size_t q = 0; q < N * C; ++q) {
                                         T* dst = p.grad.data() + q * H * W;
                                         const T* g = self.grad.data() + q * OH * OW;
                                         for (std::size_t y = 0; y < OH; ++y) {
                                           for (std::size_t x = 0; x < OW; ++x) {
                                             const T share = g[y * OW + x] * T(0.25);
                                             T* r0 = dst + 2 * y * W + 2 * x;
                                             r0[0] += share;
                                             r0[1] += share;
                                             r0[W] += share;
                                             r0[W + 1] += share;
                                           }
                                         }
                                       }
                                     });
}

template <typename T>
BasicTensor<T> max_pool2d(const BasicTensor<T>& input, bool ceil_mode) {
  require_rank(input.shape(), 4, "max_pool2d", "input");
  const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (H < 2 || W < 2) throw ShapeError("max_pool2d: spatial dims must be >= 2, got " + shape_to_string(input.shape()));
  const std::size_t OH = ceil_mode ? (H + 1) / 2 : H / 2;
  const std::size_t OW = ceil_mode ? (W + 1) / 2 : W / 2;
  std::vector<T> out(N * C * OH * OW);
  std::vector<std::size_t> argmax(out.size());
  auto v = input.values();
  for (std::size_t p = 0; p < N * C; ++p) {
    const std::size_t base = p * H * W;
    for (std::size_t y = 0; y < OH; ++y) {
      for (std::size_t x = 0; x < OW; ++x) {
        // Window cells beyond the border replicate the last row/column.
        const std::size_t ys[2] = {2 * y, std::min(2 * y + 1, H - 1)};
        const std::size_t xs[2] = {2 * x, std::min(2 * x + 1, W - 1)};
        std::size_t best = base + ys[0] * W + xs[0];
        for (auto yy : ys) {
          for (auto xx : xs) {
            const std::size_t idx = base + yy * W + xx;
            if (v[idx] > v[best]) best = idx;
          }
        }
        const std::size_t o = p * OH * OW + y * OW + x;
        out[o] = v[best];
        argmax[o] = best;
      }
    }
  }
  return BasicTensor<T>::make_result(Shape{N, C, OH, OW}, std::move(out), {input},
                                     [argmax = std::move(argmax)](Node<T>& self) {
                                       auto& p = *self.parents[0];
                                       p.ensure_grad();
                                       for (std::size_t o = 0; o < argmax.size(); ++o) p.grad[argmax[o]] += self.grad[o];
                                     });
}

template <typename T>
BasicTensor<T> upsample_nearest2d(const BasicTensor<T>& input) {
  require_rank(input.shape(), 4, "upsample_nearest2d", "input");
  const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::size_t OH = 2 * H, OW = 2 * W;
  std::vector<T> out(N * C * OH * OW);
  auto v = input.values();
  for (std::size_t p = 0; p < N * C; ++p) {
    const T* src = v.data() + p * H * W;
    T* dst = out.data() + p * OH * OW;
    for (std::size_t y = 0; y < OH; ++y) {
      const T* row = src + (y / 2) * W;
      T* o = dst + y * OW;
      for (std::size_t x = 0; x < OW; ++x) o[x] = row[x / 2];
    }
  }
  return BasicTensor<T>::make_result(Shape{N, C, OH, OW}, std::move(out), {input},
                                     [N, C, H, W, OH, OW](Node<T>& self) {
                                       auto& p = *self.parents[0];
                                       p.ensure_grad();
                                       for (std::size_t q = 0; q < N * C; ++q) {
                                         T* dst = p.grad.data() + q * H * W;
                                         const T* g = self.grad.data() + q * OH * OW;
                                         for (std::size_t y = 0; y < OH; ++y) {
                                           for (std::size_t x = 0; x < OW; ++x) dst[(y / 2) * W + x / 2] += g[y * OW + x];
                                         }
                                       }
                                     });
}

template <typename T>
BasicTensor<T> dense(const BasicTensor<T>& input, const BasicTensor<T>& weights, const BasicTensor<T>& bias) {
  require_rank(input.shape(), 2, "dense", "input");
  require_rank(weights.shape(), 2, "dense", "weights");
  require_rank(bias.shape(), 1, "dense", "bias");
  const std::size_t N = input.dim(0), D = input.dim(1), M = weights.dim(1);
  if (weights.dim(0) != D) {
    throw ShapeError(fmt::format("dense: input features (dim 1) = {} but weights rows (dim 0) = {}", D, weights.dim(0)));
  }
  if (bias.dim(0) != M) {
    throw ShapeError(fmt::format("dense: bias length (dim 0) = {} but weights columns (dim 1) = {}", bias.dim(0), M));
  }
  std::vector<T> out(N * M);
  MatMap<T> o(out.data(), N, M);
  if (N == 1 && M == 1) {
    // Eigen turns a 1x1 product into a dot product whose summation order depends on alignment.
    T acc = 0;
    for (std::size_t d = 0; d < D; ++d) acc += input.values()[d] * weights.values()[d];
    o(0, 0) = acc;
  } else {
    o.noalias() = ConstMatMap<T>(input.values().data(), N, D) * ConstMatMap<T>(weights.values().data(), D, M);
  }
  o.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.values().data(), M);
  return BasicTensor<T>::make_result(Shape{N, M}, std::move(out), {input, weights, bias}, [N, D, M](Node<T>& self) {
    auto& in = *self.parents[0];
    auto& w = *self.parents[1];
    auto& b = *self.parents[2];
    ConstMatMap<T> g(self.grad.data(), N, M);
    if (in.needs_grad) {
      in.ensure_grad();
      MatMap<T>(in.grad.data(), N, D).noalias() += g * ConstMatMap<T>(w.values.data(), D, M).transpose();
    }
    if (w.needs_grad) {
      w.ensure_grad();
      MatMap<T>(w.grad.data(), D, M).noalias() += ConstMatMap<T>(in.values.data(), N, D).transpose() * g;
    }
    if (b.needs_grad) {
      b.ensure_grad();
      for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < M; ++j) b.grad[j] += g(i, j);
    }
  });
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) {
  return elementwise(
      x,
      [](T v) {
        // Split by sign so exp never overflows.
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
BasicTensor<T> binary_cross_entropy(const BasicTensor<T>& target, const BasicTensor<T>& prediction) {
  require_same_shape(target.shape(), prediction.shape(), "binary_cross_entropy");
  const T lo = T(kBceEpsilon), hi = T(1) - T(kBceEpsilon);
  auto t = target.values();
  auto p = prediction.values();
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pc = std::clamp(p[i], lo, hi);
    total += -static_cast<double>(t[i]) * std::log(pc) - (1.0 - static_cast<double>(t[i])) * std::log1p(-pc);
  }
  return BasicTensor<T>::make_result(Shape{1}, {static_cast<T>(total)}, {prediction, target.detach()},
                                     [lo, hi](Node<T>& self) {
                                       auto& pred = *self.parents[0];
                                       const auto& tv = self.parents[1]->values;
                                       pred.ensure_grad();
                                       const T g = self.grad[0];
                                       for (std::size_t i = 0; i < pred.values.size(); ++i) {
                                         const T pc = std::clamp(pred.values[i], lo, hi);
                                         pred.grad[i] += g * (pc - tv[i]) / (pc * (T(1) - pc));
                                       }
                                     });
}

template <typename T>
BasicTensor<T> binary_cross_entropy_logits(const BasicTensor<T>& target, const BasicTensor<T>& logits) {
  require_same_shape(target.shape(), logits.shape(), "binary_cross_entropy_logits");
  const double bound = std::log((1.0 - kBceEpsilon) / kBceEpsilon);
  auto t = target.values();
  auto z = logits.values();
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double zc = std::clamp(static_cast<double>(z[i]), -bound, bound);
    // softplus(z) - t*z, written to avoid overflow
    total += std::max(zc, 0.0) + std::log1p(std::exp(-std::abs(zc))) - static_cast<double>(t[i]) * zc;
  }
  return BasicTensor<T>::make_result(Shape{1}, {static_cast<T>(total)}, {logits, target.detach()},
                                     [](Node<T>& self) {
                                       auto& zn = *self.parents[0];
                                       const auto& tv = self.parents[1]->values;
                                       zn.ensure_grad();
                                       const T g = self.grad[0];
                                       for (std::size_t i = 0; i < zn.values.size(); ++i) {
                                         const T s = T(1) / (T(1) + std::exp(-zn.values[i]));
                                         zn.grad[i] += g * (s - tv[i]);
                                       }
                                     });
}

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank(a.shape(), 4, "concat_channels", "a");
  require_rank(b.shape(), 4, "concat_channels", "b");
  for (std::size_t d : {0u, 2u, 3u}) {
    if (a.dim(d) != b.dim(d)) {
      throw ShapeError(fmt::format("concat_channels: dim {} differs ({} vs {})", d, a.dim(d), b.dim(d)));
    }
  }
  const std::size_t N = a.dim(0), CA = a.dim(1), CB = b.dim(1), HW = a.dim(2) * a.dim(3);
  std::vector<T> out(N * (CA + CB) * HW);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t n = 0; n < N; ++n) {
    T* dst = out.data() + n * (CA + CB) * HW;
    std::copy_n(av.data() + n * CA * HW, CA * HW, dst);
    std::copy_n(bv.data() + n * CB * HW, CB * HW, dst + CA * HW);
  }
  return BasicTensor<T>::make_result(Shape{N, CA + CB, a.dim(2), a.dim(3)}, std::move(out), {a, b},
                                     [N, CA, CB, HW](Node<T>& self) {
                                       auto& pa = *self.parents[0];
                                       auto& pb = *self.parents[1];
                                       if (pa.needs_grad) pa.ensure_grad();
                                       if (pb.needs_grad) pb.ensure_grad();
                                       for (std::size_t n = 0; n < N; ++n) {
                                         const T* g = self.grad.data() + n * (CA + CB) * HW;
                                         if (pa.needs_grad) {
                                           T* d = pa.grad.data() + n * CA * HW;
                                           for (std::size_t i = 0; i < CA * HW; ++i) d[i] += g[i];
                                         }
                                         if (pb.needs_grad) {
                                           T* d = pb.grad.data() + n * CB * HW;
                                           for (std::size_t i = 0; i < CB * HW; ++i) d[i] += g[CA * HW + i];
                                         }
                                       }
                                     });
}

template <typename T>
BasicTensor<T> flatten(const BasicTensor<T>& x) {
  if (x.rank() < 2) throw ShapeError("flatten: need rank >= 2, got " + shape_to_string(x.shape()));
  return x.reshape(Shape{x.dim(0), x.numel() / x.dim(0)});
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  return BasicTensor<T>::make_result(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    for (auto& p : self.parents) {
      if (!p->needs_grad) continue;
      p->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    }
  });
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  return BasicTensor<T>::make_result(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.needs_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
    }
    if (pb.needs_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] -= self.grad[i];
    }
  });
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  return BasicTensor<T>::make_result(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.needs_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * pb.values[i];
    }
    if (pb.needs_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] += self.grad[i] * pa.values[i];
    }
  });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor) {
  return elementwise(x, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
BasicTensor<T> add_scalar(const BasicTensor<T>& x, T offset) {
  return elementwise(x, [offset](T v) { return v + offset; }, [](T, T) { return T(1); });
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  double total = 0.0;
  for (auto v : x.values()) total += v;
  return BasicTensor<T>::make_result(Shape{1}, {static_cast<T>(total)}, {x}, [](Node<T>& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (auto& g : p.grad) g += self.grad[0];
  });
}

template <typename T>
BasicTensor<T> squared_distance_rows(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank(a.shape(), 2, "squared_distance_rows", "a");
  require_same_shape(a.shape(), b.shape(), "squared_distance_rows");
  const std::size_t N = a.dim(0), D = a.dim(1);
  std::vector<T> out(N, T(0));
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t d = 0; d < D; ++d) {
      const T diff = a.values()[n * D + d] - b.values()[n * D + d];
      out[n] += diff * diff;
    }
  }
  return BasicTensor<T>::make_result(Shape{N}, std::move(out), {a, b}, [N, D](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.needs_grad) pa.ensure_grad();
    if (pb.needs_grad) pb.ensure_grad();
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t d = 0; d < D; ++d) {
        const std::size_t i = n * D + d;
        const T g = T(2) * (pa.values[i] - pb.values[i]) * self.grad[n];
        if (pa.needs_grad) pa.grad[i] += g;
        if (pb.needs_grad) pb.grad[i] -= g;
      }
    }
  });
}

template <typename T>
BasicTensor<T> softmax_cross_entropy(const BasicTensor<T>& logits, const std::vector<std::size_t>& labels) {
  require_rank(logits.shape(), 2, "softmax_cross_entropy", "logits");
  const std::size_t N = logits.dim(0), C = logits.dim(1);
  if (labels.size() != N) {
    throw ShapeError(fmt::format("softmax_cross_entropy: {} labels for {} rows", labels.size(), N));
  }
  std::vector<T> probs(N * C);
  double total = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    if (labels[n] >= C) throw std::out_of_range(fmt::format("softmax_cross_entropy: label {} >= {}", labels[n], C));
    const T* row = logits.values().data() + n * C;
    const T mx = *std::max_element(row, row + C);
    double z = 0.0;
    for (std::size_t c = 0; c < C; ++c) z += std::exp(static_cast<double>(row[c] - mx));
    for (std::size_t c = 0; c < C; ++c) probs[n * C + c] = static_cast<T>(std::exp(static_cast<double>(row[c] - mx)) / z);
    total += std::log(z) - static_cast<double>(row[labels[n]] - mx);
  }
  return BasicTensor<T>::make_result(Shape{1}, {static_cast<T>(total)}, {logits},
                                     [N, C, labels, probs = std::move(probs)](Node<T>& self) {
                                       auto& p = *self.parents[0];
                                       p.ensure_grad();
                                       const T g = self.grad[0];
                                       for (std::size_t n = 0; n < N; ++n) {
                                         for (std::size_t c = 0; c < C; ++c) {
                                           const T target = c == labels[n] ? T(1) : T(0);
                                           p.grad[n * C + c] += g * (probs[n * C + c] - target);
                                         }
                                       }
                                     });
}

template <typename T>
BasicTensor<T> dropout(const BasicTensor<T>& x, T p, std::mt19937_64& rng) {
  if (!(p >= T(0) && p < T(1))) throw std::invalid_argument(fmt::format("dropout: probability {} not in [0,1)", p));
  std::vector<T> mask(x.numel());
  const T keep_scale = T(1) / (T(1) - p);
  for (auto& m : mask) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    m = u < static_cast<double>(p) ? T(0) : keep_scale;
  }
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] * mask[i];
  return BasicTensor<T>::make_result(x.shape(), std::move(out), {x}, [mask = std::move(mask)](Node<T>& self) {
    auto& px = *self.parents[0];
    px.ensure_grad();
    for (std::size_t i = 0; i < mask.size(); ++i) px.grad[i] += self.grad[i] * mask[i];
  });
}

#define SANET_INSTANTIATE_OPS(T)                                                                           \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);     \
  template BasicTensor<T> leaky_relu(const BasicTensor<T>&, T);                                            \
  template BasicTensor<T> avg_pool2d(const BasicTensor<T>&);                                               \
  template BasicTensor<T> max_pool2d(const BasicTensor<T>&, bool);                                         \
  template BasicTensor<T> upsample_nearest2d(const BasicTensor<T>&);                                       \
  template BasicTensor<T> dense(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);      \
  template BasicTensor<T> sigmoid(const BasicTensor<T>&);                                                  \
  template BasicTensor<T> binary_cross_entropy(const BasicTensor<T>&, const BasicTensor<T>&);              \
  template BasicTensor<T> binary_cross_entropy_logits(const BasicTensor<T>&, const BasicTensor<T>&);       \
  template BasicTensor<T> concat_channels(const BasicTensor<T>&, const BasicTensor<T>&);                   \
  template BasicTensor<T> flatten(const BasicTensor<T>&);                                                  \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                               \
  template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                               \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                               \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                                                 \
  template BasicTensor<T> add_scalar(const BasicTensor<T>&, T);                                            \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                                      \
  template BasicTensor<T> squared_distance_rows(const BasicTensor<T>&, const BasicTensor<T>&);             \
  template BasicTensor<T> softmax_cross_entropy(const BasicTensor<T>&, const std::vector<std::size_t>&);    \
  template BasicTensor<T> dropout(const BasicTensor<T>&, T, std::mt19937_64&);

SANET_INSTANTIATE_OPS(float)
SANET_INSTANTIATE_OPS(double)

#undef SANET_INSTANTIATE_OPS

}  // namespace sanet
