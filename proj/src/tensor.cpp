#include "sanet/tensor.hpp"

#include <fmt/format.h>

#include <unordered_set>

namespace sanet {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  return fmt::format("[{}]", fmt::join(shape, ","));
}

template <typename T>
BasicTensor<T>::BasicTensor() : BasicTensor(Shape{0}, {}) {}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> values, bool requires_grad)
    : node_(std::make_shared<detail::Node<T>>()) {
  for (auto d : shape) {
    if (d == 0 && shape != Shape{0}) throw ShapeError("tensor dimensions must be positive: " + shape_to_string(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw ShapeError(fmt::format("shape {} holds {} values, got {}", shape_to_string(shape),
                                 shape_numel(shape), values.size()));
  }
  node_->shape = std::move(shape);
  node_->values = std::move(values);
  node_->requires_grad = requires_grad;
  node_->needs_grad = requires_grad;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value, bool requires_grad) {
  std::vector<T> v(shape_numel(shape), value);
  return BasicTensor(std::move(shape), std::move(v), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::scalar(T value, bool requires_grad) {
  return BasicTensor(Shape{1}, {value}, requires_grad);
}

template <typename T>
std::size_t BasicTensor<T>::dim(std::size_t axis) const {
  if (axis >= rank()) throw ShapeError(fmt::format("axis {} out of range for shape {}", axis, shape_to_string(shape())));
  return node_->shape[axis];
}

template <typename T>
T BasicTensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() requires a single-element tensor, got " + shape_to_string(shape()));
  return node_->values[0];
}

template <typename T>
void BasicTensor<T>::set_requires_grad(bool on) {
  if (node_->backward_fn) throw std::logic_error("requires_grad can only be set on leaf tensors");
  node_->requires_grad = on;
  node_->needs_grad = on;
  if (!on) node_->grad.clear();
}

template <typename T>
std::span<T> BasicTensor<T>::mutable_grad() {
  node_->ensure_grad();
  return node_->grad;
}

template <typename T>
void BasicTensor<T>::backward() const {
  if (numel() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " + shape_to_string(shape()));
  }
  if (!node_->needs_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<detail::Node<T>*> order;
  std::unordered_set<detail::Node<T>*> seen;
  std::vector<std::pair<detail::Node<T>*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      auto* p = n->parents[next++].get();
      if (p->needs_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->ensure_grad();
  node_->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto* n = *it;
    if (n->backward_fn && !n->grad.empty()) {
      n->backward_fn(*n);
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
  }
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
  return BasicTensor(shape(), node_->values, false);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshape(Shape new_shape) const {
  if (shape_numel(new_shape) != numel()) {
    throw ShapeError(fmt::format("cannot reshape {} to {}", shape_to_string(shape()), shape_to_string(new_shape)));
  }
  return make_result(std::move(new_shape), node_->values, {*this}, [](detail::Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.needs_grad) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
  });
}

template <typename T>
BasicTensor<T> BasicTensor<T>::make_result(Shape shape, std::vector<T> values,
                                           std::vector<BasicTensor> inputs,
                                           std::function<void(detail::Node<T>&)> backward_fn) {
  BasicTensor out(std::move(shape), std::move(values), false);
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in.needs_grad();
  if (needs) {
    out.node_->needs_grad = true;
    out.node_->parents.reserve(inputs.size());
    for (auto& in : inputs) out.node_->parents.push_back(in.node_);
    out.node_->backward_fn = std::move(backward_fn);
  }
  return out;
}

template class BasicTensor<float>;
template class BasicTensor<double>;

}  // namespace sanet
