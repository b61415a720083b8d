#pragma once

// Convenience drivers over the tape and dual types. `f` must be generic: it is
// called with Tensor or Dual<Array> arguments of shape k x 1 (or k x batch).

#include "nphdae/autodiff/dual.hpp"
#include "nphdae/autodiff/tape.hpp"

#include <fmt/format.h>

namespace nphdae::ad {

using Vector = Eigen::VectorXd;

// Gradient of a scalar-valued f by one reverse sweep.
template <class F>
Vector gradient(F&& f, const Vector& x) {
  Tape tape;
  Tensor in = tape.variable(Array(x.array()));
  Tensor out = f(in);
  if (out.rows() != 1 || out.cols() != 1) {
    throw StructureError(fmt::format("gradient: f must be scalar, got {}x{}", out.rows(), out.cols()));
  }
  tape.backward(out);
  return tape.grad(in).matrix();
}

// Directional derivative J(x) v by forward mode.
template <class F>
Array jvp(F&& f, const Array& x, const Array& v) {
  Dual<Array> out = f(Dual<Array>(x, v));
  if (!out.d) return Array::Zero(out.v.rows(), out.v.cols());
  return *out.d;
}

// Dense Jacobian, one forward pass per input coordinate.
template <class F>
Matrix jacobian(F&& f, const Vector& x) {
  const Index k = x.size();
  Matrix jac;
  for (Index i = 0; i < k; ++i) {
    Array e = Array::Zero(k, 1);
    e(i, 0) = 1.0;
    Dual<Array> out = f(Dual<Array>(Array(x.array()), e));
    if (i == 0) jac = Matrix::Zero(out.v.rows(), k);
    if (out.d) jac.col(i) = out.d->matrix();
  }
  return jac;
}

// Dense Jacobian, one reverse sweep per output coordinate.
template <class F>
Matrix jacobian_reverse(F&& f, const Vector& x) {
  Tape tape;
  Tensor in = tape.variable(Array(x.array()));
  Tensor out = f(in);
  Matrix jac = Matrix::Zero(out.rows(), x.size());
  for (Index r = 0; r < out.rows(); ++r) {
    tape.zero_grad();
    Array seed = Array::Zero(out.rows(), 1);
    seed(r, 0) = 1.0;
    tape.backward(out, seed);
    jac.row(r) = tape.grad(in).matrix().transpose();
  }
  return jac;
}

// Central finite-difference Jacobian, for tests and diagnostics.
template <class F>
Matrix finite_difference_jacobian(F&& f, const Vector& x, double step = 1e-5) {
  Matrix jac;
  for (Index i = 0; i < x.size(); ++i) {
    Array xp = x.array();
    Array xm = x.array();
    xp(i, 0) += step;
    xm(i, 0) -= step;
    Array fp = f(xp);
    Array fm = f(xm);
    if (i == 0) jac = Matrix::Zero(fp.rows(), x.size());
    jac.col(i) = ((fp - fm) / (2.0 * step)).matrix();
  }
  return jac;
}

}  // namespace nphdae::ad
