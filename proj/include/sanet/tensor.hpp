#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sanet {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <typename T>
class BasicTensor;

namespace detail {

// One vertex of the computation graph. Non-leaf nodes keep their parents and a
// closure that scatters their gradient into the parents' gradients.
template <typename T>
struct Node {
  Shape shape;
  std::vector<T> values;
  std::vector<T> grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
  bool needs_grad = false;  // requires_grad or any ancestor needs it
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), T(0));
  }
};

}  // namespace detail

/// Dense row-major n-dimensional array that records the operations applied to
/// it when any input requires a gradient. Copies share the underlying storage.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  BasicTensor();
  BasicTensor(Shape shape, std::vector<T> values, bool requires_grad = false);

  static BasicTensor zeros(Shape shape, bool requires_grad = false);
  static BasicTensor full(Shape shape, T value, bool requires_grad = false);
  static BasicTensor scalar(T value, bool requires_grad = false);

  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->values.size(); }

  std::span<const T> values() const { return node_->values; }
  std::span<T> mutable_values() { return node_->values; }
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on);
  bool needs_grad() const { return node_->needs_grad; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad();
  void zero_grad() { node_->grad.clear(); }

  /// Reverse-mode sweep from this scalar. Leaf tensors with requires_grad
  /// accumulate into their grad; intermediate gradients are released.
  void backward() const;

  /// Copy of the values with no graph history.
  BasicTensor detach() const;
  BasicTensor reshape(Shape shape) const;

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<U>(node_->values[i]);
    return BasicTensor<U>(shape(), std::move(out), requires_grad());
  }

  // Graph construction hook used by the op implementations.
  static BasicTensor make_result(Shape shape, std::vector<T> values,
                                 std::vector<BasicTensor> inputs,
                                 std::function<void(detail::Node<T>&)> backward_fn);

  const NodePtr& node() const { return node_; }

 private:
  explicit BasicTensor(NodePtr node) : node_(std::move(node)) {}
  NodePtr node_;
};

using Tensor = BasicTensor<float>;

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;

}  // namespace sanet
