#pragma once

#include "nphdae/autodiff/array_ops.hpp"

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>

namespace nphdae::ad {

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; only valid while the tape lives.
class Tensor {
 public:
  Tensor() = default;

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Array& value() const;
  bool requires_grad() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }

 private:
  friend class Tape;
  Tensor(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Reverse-mode tape. Nodes are appended in evaluation order, so a reverse sweep
// over the node list is a valid topological order. Single owner; not thread safe.
class Tape {
 public:
  using Backprop = std::function<void(Tape&, const Array& grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor variable(Array value);
  Tensor constant(Array value);
  // Records an op result. When none of `parents` requires a gradient the node is
  // stored as a constant and `backprop` is dropped.
  Tensor record(Array value, std::initializer_list<Tensor> parents, Backprop backprop);
  Tensor record(Array value, std::span<const Tensor> parents, Backprop backprop);

  void backward(const Tensor& root);
  void backward(const Tensor& root, const Array& seed);
  void zero_grad();

  // Accumulated adjoint; zeros when the node was not reached.
  Array grad(const Tensor& t) const;
  void accumulate(const Tensor& t, const Array& g);

  std::size_t size() const { return nodes_.size(); }
  const Array& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

 private:
  struct Node {
    Array value;
    Array grad;
    Backprop backprop;
    bool requires_grad = false;
  };
  std::deque<Node> nodes_;
};

inline const Array& Tensor::value() const { return tape_->value(id_); }
inline bool Tensor::requires_grad() const { return tape_->requires_grad(id_); }

inline Index rows(const Tensor& t) { return t.rows(); }
inline Index cols(const Tensor& t) { return t.cols(); }
inline const Array& value_of(const Tensor& t) { return t.value(); }
inline Tensor lift(const Tensor& like, Array v) { return like.tape().constant(std::move(v)); }

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator/(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a);
Tensor operator+(const Tensor& a, double s);
Tensor operator+(double s, const Tensor& a);
Tensor operator-(const Tensor& a, double s);
Tensor operator-(double s, const Tensor& a);
Tensor operator*(const Tensor& a, double s);
Tensor operator*(double s, const Tensor& a);
Tensor operator/(const Tensor& a, double s);

Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor step(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor pow(const Tensor& a, double p);

Tensor matmul(const Tensor& w, const Tensor& x);
Tensor matmul(const Matrix& w, const Tensor& x);
Tensor add_bias(const Tensor& x, const Tensor& b);
Tensor add_bias(const Tensor& x, const Matrix& b);

Tensor block_rows(const Tensor& a, Index start, Index count);
Tensor vstack(std::span<const Tensor> parts);
inline Tensor vstack(std::initializer_list<Tensor> parts) {
  return vstack(std::span<const Tensor>(parts.begin(), parts.size()));
}
Tensor colsum(const Tensor& a);
Tensor sum(const Tensor& a);

Tensor batched_solve(const Tensor& mats, const Tensor& rhs, std::vector<std::uint8_t>* singular = nullptr);

}  // namespace nphdae::ad
