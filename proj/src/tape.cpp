#include "nphdae/autodiff/tape.hpp"

#include "nphdae/numerics.hpp"

#include <fmt/format.h>

#include <algorithm>

namespace nphdae::ad {

namespace {

void check_same_shape(const Array& a, const Array& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw StructureError(fmt::format("{}: shape mismatch {}x{} vs {}x{}", op, a.rows(), a.cols(), b.rows(), b.cols()));
  }
}

Tape& common_tape(const Tensor& a, const Tensor& b) {
  if (&a.tape() != &b.tape()) throw std::logic_error("tensors recorded on different tapes");
  return a.tape();
}

}  // namespace

Array vstack(std::span<const Array> parts) {
  Index total = 0;
  Index batch = -1;
  for (const Array& p : parts) {
    total += p.rows();
    if (p.rows() > 0 || batch < 0) {
      if (batch >= 0 && p.cols() != batch && p.rows() > 0) {
        throw StructureError("vstack: column count mismatch");
      }
      if (p.rows() > 0) batch = p.cols();
    }
  }
  if (batch < 0) batch = parts.empty() ? 0 : parts.front().cols();
  Array out(total, batch);
  Index at = 0;
  for (const Array& p : parts) {
    if (p.rows() == 0) continue;
    out.middleRows(at, p.rows()) = p;
    at += p.rows();
  }
  return out;
}

Array batched_solve(const Array& mats, const Array& rhs, std::vector<std::uint8_t>* singular) {
  const Index k = rhs.rows();
  const Index batch = rhs.cols();
  if (mats.rows() != k * k || mats.cols() != batch) {
    throw StructureError(fmt::format("batched_solve: expected {}x{} matrices, got {}x{}", k * k, batch, mats.rows(), mats.cols()));
  }
  if (singular) singular->assign(static_cast<std::size_t>(batch), 0);
  Array out = Array::Zero(k, batch);
  for (Index b = 0; b < batch; ++b) {
    const Eigen::Map<const Matrix> m(mats.col(b).data(), k, k);
    try {
      const numerics::Lu lu{Matrix(m)};
      out.col(b) = lu.solve(numerics::Vector(rhs.col(b).matrix())).array();
    } catch (const SingularMatrixError&) {
      if (!singular) throw;
      (*singular)[static_cast<std::size_t>(b)] = 1;
    }
  }
  return out;
}

// --- Tape ---------------------------------------------------------------

Tensor Tape::variable(Array value) {
  nodes_.push_back(Node{std::move(value), Array(), nullptr, true});
  return Tensor(this, nodes_.size() - 1);
}

Tensor Tape::constant(Array value) {
  nodes_.push_back(Node{std::move(value), Array(), nullptr, false});
  return Tensor(this, nodes_.size() - 1);
}

Tensor Tape::record(Array value, std::span<const Tensor> parents, Backprop backprop) {
  const bool needs = std::any_of(parents.begin(), parents.end(), [](const Tensor& p) { return p.requires_grad(); });
  if (!needs) return constant(std::move(value));
  nodes_.push_back(Node{std::move(value), Array(), std::move(backprop), true});
  return Tensor(this, nodes_.size() - 1);
}

Tensor Tape::record(Array value, std::initializer_list<Tensor> parents, Backprop backprop) {
  return record(std::move(value), std::span<const Tensor>(parents.begin(), parents.size()), std::move(backprop));
}

void Tape::accumulate(const Tensor& t, const Array& g) {
  Node& n = nodes_[t.id()];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(const Tensor& root) {
  backward(root, Array::Ones(root.rows(), root.cols()));
}

void Tape::backward(const Tensor& root, const Array& seed) {
  check_same_shape(root.value(), seed, "backward seed");
  accumulate(root, seed);
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backprop || n.grad.size() == 0) continue;
    // Copy: the closure may push into other nodes but never into this one.
    const Array g = n.grad;
    n.backprop(*this, g);
  }
}

void Tape::zero_grad() {
  for (Node& n : nodes_) n.grad.resize(0, 0);
}

Array Tape::grad(const Tensor& t) const {
  const Node& n = nodes_[t.id()];
  if (n.grad.size() == 0) return Array::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

// --- elementwise ops -------------------------------------------------------

Tensor operator+(const Tensor& a, const Tensor& b) {
  check_same_shape(a.value(), b.value(), "add");
  Tape& t = common_tape(a, b);
  return t.record(a.value() + b.value(), {a, b}, [a, b](Tape& tp, const Array& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  check_same_shape(a.value(), b.value(), "sub");
  Tape& t = common_tape(a, b);
  return t.record(a.value() - b.value(), {a, b}, [a, b](Tape& tp, const Array& g) {
    tp.accumulate(a, g);
    if (b.requires_grad()) tp.accumulate(b, -g);
  });
}

Tensor operator*(const Tensor& a, const Tensor& b) {
  check_same_shape(a.value(), b.value(), "mul");
  Tape& t = common_tape(a, b);
  return t.record(a.value() * b.value(), {a, b}, [a, b](Tape& tp, const Array& g) {
    if (a.requires_grad()) tp.accumulate(a, g * b.value());
    if (b.requires_grad()) tp.accumulate(b, g * a.value());
  });
}

Tensor operator/(const Tensor& a, const Tensor& b) {
  check_same_shape(a.value(), b.value(), "div");
  Tape& t = common_tape(a, b);
  const std::size_t id = t.size();
  return t.record(a.value() / b.value(), {a, b}, [a, b, id](Tape& tp, const Array& g) {
    const Array gb = g / b.value();
    if (a.requires_grad()) tp.accumulate(a, gb);
    if (b.requires_grad()) tp.accumulate(b, -gb * tp.value(id));
  });
}

Tensor operator-(const Tensor& a) {
  return a.tape().record(-a.value(), {a}, [a](Tape& tp, const Array& g) { tp.accumulate(a, -g); });
}

Tensor operator+(const Tensor& a, double s) {
  return a.tape().record(a.value() + s, {a}, [a](Tape& tp, const Array& g) { tp.accumulate(a, g); });
}
Tensor operator+(double s, const Tensor& a) { return a + s; }
Tensor operator-(const Tensor& a, double s) { return a + (-s); }

Tensor operator-(double s, const Tensor& a) {
  return a.tape().record(s - a.value(), {a}, [a](Tape& tp, const Array& g) { tp.accumulate(a, -g); });
}

Tensor operator*(const Tensor& a, double s) {
  return a.tape().record(a.value() * s, {a}, [a, s](Tape& tp, const Array& g) { tp.accumulate(a, g * s); });
}
Tensor operator*(double s, const Tensor& a) { return a * s; }
Tensor operator/(const Tensor& a, double s) {
  return a.tape().record(a.value() / s, {a}, [a, s](Tape& tp, const Array& g) { tp.accumulate(a, g / s); });
}

Tensor tanh(const Tensor& a) {
  Tape& t = a.tape();
  const std::size_t id = t.size();
  return t.record(a.value().tanh(), {a}, [a, id](Tape& tp, const Array& g) {
    const Array& y = tp.value(id);
    tp.accumulate(a, g * (1.0 - y * y));
  });
}

Tensor relu(const Tensor& a) {
  return a.tape().record(a.value().max(0.0), {a}, [a](Tape& tp, const Array& g) {
    tp.accumulate(a, g * (a.value() > 0.0).cast<double>());
  });
}

Tensor step(const Tensor& a) { return a.tape().constant((a.value() > 0.0).cast<double>()); }

Tensor exp(const Tensor& a) {
  Tape& t = a.tape();
  const std::size_t id = t.size();
  return t.record(a.value().exp(), {a}, [a, id](Tape& tp, const Array& g) { tp.accumulate(a, g * tp.value(id)); });
}

Tensor pow(const Tensor& a, double p) {
  return a.tape().record(a.value().pow(p), {a}, [a, p](Tape& tp, const Array& g) {
    tp.accumulate(a, g * p * a.value().pow(p - 1.0));
  });
}

// --- linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& w, const Tensor& x) {
  if (w.cols() != x.rows()) {
    throw StructureError(fmt::format("matmul: {}x{} times {}x{}", w.rows(), w.cols(), x.rows(), x.cols()));
  }
  Tape& t = common_tape(w, x);
  Array v = (w.value().matrix() * x.value().matrix()).array();
  return t.record(std::move(v), {w, x}, [w, x](Tape& tp, const Array& g) {
    if (w.requires_grad()) tp.accumulate(w, (g.matrix() * x.value().matrix().transpose()).array());
    if (x.requires_grad()) tp.accumulate(x, (w.value().matrix().transpose() * g.matrix()).array());
  });
}

Tensor matmul(const Matrix& w, const Tensor& x) {
  if (w.cols() != x.rows()) {
    throw StructureError(fmt::format("matmul: {}x{} times {}x{}", w.rows(), w.cols(), x.rows(), x.cols()));
  }
  Array v = (w * x.value().matrix()).array();
  // The constant factor is captured by value; these are small structural matrices.
  return x.tape().record(std::move(v), {x}, [wt = Matrix(w.transpose()), x](Tape& tp, const Array& g) {
    tp.accumulate(x, (wt * g.matrix()).array());
  });
}

Tensor add_bias(const Tensor& x, const Tensor& b) {
  if (b.cols() != 1 || b.rows() != x.rows()) throw StructureError("add_bias: bias must be a column matching x");
  Tape& t = common_tape(x, b);
  Array v = x.value().colwise() + b.value().col(0);
  return t.record(std::move(v), {x, b}, [x, b](Tape& tp, const Array& g) {
    tp.accumulate(x, g);
    if (b.requires_grad()) tp.accumulate(b, g.rowwise().sum());
  });
}

Tensor add_bias(const Tensor& x, const Matrix& b) {
  if (b.cols() != 1 || b.rows() != x.rows()) throw StructureError("add_bias: bias must be a column matching x");
  Array v = x.value().colwise() + b.col(0).array();
  return x.tape().record(std::move(v), {x}, [x](Tape& tp, const Array& g) { tp.accumulate(x, g); });
}

Tensor block_rows(const Tensor& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw StructureError("block_rows: range out of bounds");
  const Index total = a.rows();
  return a.tape().record(a.value().middleRows(start, count), {a}, [a, start, count, total](Tape& tp, const Array& g) {
    Array full = Array::Zero(total, g.cols());
    full.middleRows(start, count) = g;
    tp.accumulate(a, full);
  });
}

Tensor vstack(std::span<const Tensor> parts) {
  if (parts.empty()) throw StructureError("vstack: no parts");
  std::vector<Array> values;
  values.reserve(parts.size());
  for (const Tensor& p : parts) values.push_back(p.value());
  Array v = vstack(std::span<const Array>(values));
  std::vector<Tensor> owned(parts.begin(), parts.end());
  Tape& t = parts.front().tape();
  return t.record(std::move(v), parts, [owned](Tape& tp, const Array& g) {
    Index at = 0;
    for (const Tensor& p : owned) {
      const Index r = p.rows();
      if (r > 0 && p.requires_grad()) tp.accumulate(p, g.middleRows(at, r));
      at += r;
    }
  });
}

Tensor colsum(const Tensor& a) {
  const Index r = a.rows();
  return a.tape().record(a.value().colwise().sum(), {a}, [a, r](Tape& tp, const Array& g) {
    tp.accumulate(a, g.replicate(r, 1));
  });
}

Tensor sum(const Tensor& a) {
  const Index r = a.rows();
  const Index c = a.cols();
  return a.tape().record(Array::Constant(1, 1, a.value().sum()), {a}, [a, r, c](Tape& tp, const Array& g) {
    tp.accumulate(a, Array::Constant(r, c, g(0, 0)));
  });
}

Tensor batched_solve(const Tensor& mats, const Tensor& rhs, std::vector<std::uint8_t>* singular) {
  Tape& t = common_tape(mats, rhs);
  std::vector<std::uint8_t> local;
  std::vector<std::uint8_t>* mask = singular ? singular : &local;
  Array x = batched_solve(mats.value(), rhs.value(), mask);
  if (!singular) {
    for (std::uint8_t s : local) {
      if (s) throw SingularMatrixError("batched_solve: singular matrix", -1);
    }
  }
  const std::size_t id = t.size();
  return t.record(std::move(x), {mats, rhs}, [mats, rhs, id, skip = *mask](Tape& tp, const Array& g) {
    const Index k = rhs.rows();
    const Array& xv = tp.value(id);
    Array grhs = Array::Zero(k, g.cols());
    Array gmat = Array::Zero(k * k, g.cols());
    for (Index b = 0; b < g.cols(); ++b) {
      if (skip[static_cast<std::size_t>(b)]) continue;
      const Eigen::Map<const Matrix> m(mats.value().col(b).data(), k, k);
      const numerics::Lu lu{Matrix(m)};
      const numerics::Vector lam = lu.solve_transposed(numerics::Vector(g.col(b).matrix()));
      grhs.col(b) = lam.array();
      // d/dA of A^{-1} r contracted with g is -lam x^T, stored column-major.
      Eigen::Map<Matrix>(gmat.col(b).data(), k, k) = -lam * xv.col(b).matrix().transpose();
    }
    if (rhs.requires_grad()) tp.accumulate(rhs, grhs);
    if (mats.requires_grad()) tp.accumulate(mats, gmat);
  });
}

}  // namespace nphdae::ad
