#pragma once

// Reverse-mode automatic differentiation: Tensor values plus an append-only
// tape (Graph) of operation records replayed in reverse. One tape per worker
// thread; gradients accumulate across fan-out.

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "pq/common.hpp"

namespace pq {

template <typename T>
struct TensorImpl {
  std::vector<std::size_t> shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until backward reaches this tensor
  bool requires_grad = false;
  bool leaf = true;

  std::size_t size() const { return value.size(); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
  }
};

template <typename T>
class Tensor {
 public:
  Tensor() : p_(nullptr) {}
  explicit Tensor(std::shared_ptr<TensorImpl<T>> p) : p_(std::move(p)) {}

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false) {
    auto impl = std::make_shared<TensorImpl<T>>();
    impl->shape = std::move(shape);
    impl->value.assign(product(impl->shape), T(0));
    impl->requires_grad = requires_grad;
    return Tensor(impl);
  }

  static Tensor full(std::vector<std::size_t> shape, T v, bool requires_grad = false) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::fill(t.data().begin(), t.data().end(), v);
    return t;
  }

  static Tensor from(std::vector<std::size_t> shape, std::vector<T> values,
                     bool requires_grad = false) {
    auto impl = std::make_shared<TensorImpl<T>>();
    impl->shape = std::move(shape);
    if (product(impl->shape) != values.size())
      throw DimensionError("Tensor::from: shape does not match value count");
    impl->value = std::move(values);
    impl->requires_grad = requires_grad;
    return Tensor(impl);
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return from({1}, {v}, requires_grad);
  }

  bool defined() const { return p_ != nullptr; }
  const std::vector<std::size_t>& shape() const { return p_->shape; }
  std::size_t size() const { return p_->value.size(); }
  std::size_t dim(std::size_t i) const { return p_->shape[i]; }
  std::size_t rank() const { return p_->shape.size(); }

  std::vector<T>& data() { return p_->value; }
  const std::vector<T>& data() const { return p_->value; }
  T item() const {
    if (size() != 1) throw DimensionError("item(): tensor is not scalar");
    return p_->value[0];
  }

  bool requires_grad() const { return p_->requires_grad; }
  void set_requires_grad(bool rg) {
    p_->requires_grad = rg;
    if (!rg) p_->grad.clear();
  }
  bool has_grad() const { return !p_->grad.empty(); }
  // Absent gradient (detached tensor or backward not run) is an error.
  const std::vector<T>& grad() const {
    if (p_->grad.empty())
      throw NumericError("grad(): no gradient present on this tensor");
    return p_->grad;
  }
  std::vector<T>& grad_mut() { return p_->grad; }
  void zero_grad() { p_->grad.clear(); }

  std::shared_ptr<TensorImpl<T>> impl() const { return p_; }

 private:
  std::shared_ptr<TensorImpl<T>> p_;
};

// The Graph: an append-only tape of backward closures, replayed in reverse.
template <typename T>
class Tape {
 public:
  struct Node {
    std::shared_ptr<TensorImpl<T>> out;
    std::function<void()> backprop;
  };

  void record(std::shared_ptr<TensorImpl<T>> out, std::function<void()> fn) {
    nodes_.push_back(Node{std::move(out), std::move(fn)});
  }

  std::size_t size() const { return nodes_.size(); }

  void backward(const Tensor<T>& loss) {
    if (loss.size() != 1)
      throw DimensionError("backward: loss must be a scalar");
    if (consumed_)
      throw NumericError("backward: tape already consumed; run forward again");
    consumed_ = true;
    loss.impl()->ensure_grad();
    loss.impl()->grad[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (it->out->grad.empty()) continue;  // not reachable from the loss
      it->backprop();
    }
  }

  bool consumed() const { return consumed_; }
  void reset() {
    nodes_.clear();
    consumed_ = false;
  }

 private:
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

template <typename T>
inline Tape<T>*& active_tape() {
  thread_local Tape<T>* t = nullptr;
  return t;
}

// RAII scope making a tape active on the current thread.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& t) : prev_(active_tape<T>()) { active_tape<T>() = &t; }
  ~TapeScope() { active_tape<T>() = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* prev_;
};

}  // namespace pq
