#pragma once

// Plain (non-differentiated) batch arrays. Every quantity in the pipeline is a
// rows x batch array whose columns are independent samples; the same generic
// code runs on these, on tape tensors and on dual numbers over either.

#include "nphdae/errors.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

namespace nphdae::ad {

using Array = Eigen::ArrayXXd;
using Matrix = Eigen::MatrixXd;

inline Index rows(const Array& a) { return a.rows(); }
inline Index cols(const Array& a) { return a.cols(); }
inline const Array& value_of(const Array& a) { return a; }
inline Array lift(const Array& /*like*/, Array v) { return v; }

inline Array tanh(const Array& a) { return a.tanh(); }
inline Array relu(const Array& a) { return a.max(0.0); }
// Derivative of relu; the subgradient at 0 is 0.
inline Array step(const Array& a) { return (a > 0.0).cast<double>(); }
inline Array exp(const Array& a) { return a.exp(); }
inline Array pow(const Array& a, double p) { return a.pow(p); }

inline Array matmul(const Matrix& w, const Array& x) { return (w * x.matrix()).array(); }
inline Array add_bias(const Array& x, const Matrix& b) { return x.colwise() + b.col(0).array(); }

inline Array block_rows(const Array& a, Index start, Index count) { return a.middleRows(start, count); }
Array vstack(std::span<const Array> parts);
inline Array vstack(std::initializer_list<Array> parts) {
  return vstack(std::span<const Array>(parts.begin(), parts.size()));
}

inline Array colsum(const Array& a) { return a.colwise().sum(); }
inline Array sum(const Array& a) { return Array::Constant(1, 1, a.sum()); }

// Column-wise solve of k x k systems. `mats` stores one column-major k x k matrix
// per column (k*k rows); `rhs` is k x batch. Columns whose matrix is singular are
// reported in `singular` (when given) and solved as zero.
Array batched_solve(const Array& mats, const Array& rhs, std::vector<std::uint8_t>* singular = nullptr);

}  // namespace nphdae::ad
