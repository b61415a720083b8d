#include "nphdae/numerics.hpp"

#include <fmt/format.h>

#include <cmath>

namespace nphdae::numerics {

namespace {

// In-place Householder triangularization. On return `work` holds R in its upper
// triangle and `q` the accumulated orthogonal factor (p x p).
void householder(Matrix& work, Matrix& q) {
  const Index p = work.rows();
  const Index d = work.cols();
  q = Matrix::Identity(p, p);
  for (Index k = 0; k < d; ++k) {
    Vector v = work.col(k).tail(p - k);
    const double norm = v.norm();
    if (norm == 0.0) continue;
    const double alpha = v(0) >= 0.0 ? -norm : norm;
    v(0) -= alpha;
    const double vnorm = v.norm();
    if (vnorm == 0.0) continue;
    v /= vnorm;
    work.bottomRightCorner(p - k, d - k) -= 2.0 * v * (v.transpose() * work.bottomRightCorner(p - k, d - k));
    q.rightCols(p - k) -= 2.0 * (q.rightCols(p - k) * v) * v.transpose();
  }
}

}  // namespace

CompleteQr complete_qr(const Matrix& a) {
  const Index p = a.rows();
  const Index d = a.cols();
  if (d < 1 || p < d) {
    throw RankError(fmt::format("reduced QR needs p >= d >= 1, got {}x{}", p, d));
  }
  Matrix work = a;
  Matrix q;
  householder(work, q);
  Matrix r = work.topRows(d).triangularView<Eigen::Upper>();

  const double scale = a.norm();
  for (Index k = 0; k < d; ++k) {
    if (!(std::abs(r(k, k)) > kRankTolerance * scale)) {
      throw RankError(fmt::format("matrix is rank deficient (|R[{0},{0}]| = {1:g})", k, std::abs(r(k, k))));
    }
    // Positive diagonal convention.
    if (r(k, k) < 0.0) {
      r.row(k) *= -1.0;
      q.col(k) *= -1.0;
    }
  }
  CompleteQr out;
  out.complement = q.rightCols(p - d);
  out.q = std::move(q);
  out.r = std::move(r);
  return out;
}

QrFactors reduced_qr(const Matrix& a) {
  CompleteQr full = complete_qr(a);
  return QrFactors{full.q.leftCols(a.cols()), std::move(full.r)};
}

Matrix lstsq(const Matrix& a, const Matrix& b) {
  if (b.rows() != a.rows()) {
    throw StructureError(fmt::format("lstsq: right-hand side has {} rows, expected {}", b.rows(), a.rows()));
  }
  const QrFactors qr = reduced_qr(a);
  Matrix y = qr.q.transpose() * b;
  return qr.r.triangularView<Eigen::Upper>().solve(y);
}

Vector lstsq(const Matrix& a, const Vector& b) { return lstsq(a, Matrix(b)).col(0); }

Lu::Lu(const Matrix& a) : lu_(a), perm_(a.rows()) {
  if (a.rows() != a.cols()) {
    throw StructureError(fmt::format("LU needs a square matrix, got {}x{}", a.rows(), a.cols()));
  }
  const Index n = a.rows();
  for (Index i = 0; i < n; ++i) perm_(i) = static_cast<int>(i);
  const double scale = n > 0 ? a.cwiseAbs().maxCoeff() : 0.0;
  for (Index k = 0; k < n; ++k) {
    Index pivot_row = k;
    lu_.col(k).tail(n - k).cwiseAbs().maxCoeff(&pivot_row);
    pivot_row += k;
    const double pivot = lu_(pivot_row, k);
    if (!(std::abs(pivot) >= kPivotTolerance * scale) || scale == 0.0) {
      throw SingularMatrixError(fmt::format("singular Jacobian: pivot {} has magnitude {:g}", k, std::abs(pivot)), k);
    }
    if (pivot_row != k) {
      lu_.row(k).swap(lu_.row(pivot_row));
      std::swap(perm_(k), perm_(pivot_row));
    }
    const Index rest = n - k - 1;
    if (rest > 0) {
      lu_.col(k).tail(rest) /= lu_(k, k);
      lu_.bottomRightCorner(rest, rest).noalias() -= lu_.col(k).tail(rest) * lu_.row(k).tail(rest);
    }
  }
}

Matrix Lu::solve(const Matrix& b) const {
  if (b.rows() != lu_.rows()) {
    throw StructureError(fmt::format("LU solve: right-hand side has {} rows, expected {}", b.rows(), lu_.rows()));
  }
  Matrix x(b.rows(), b.cols());
  for (Index i = 0; i < b.rows(); ++i) x.row(i) = b.row(perm_(i));
  lu_.triangularView<Eigen::UnitLower>().solveInPlace(x);
  lu_.triangularView<Eigen::Upper>().solveInPlace(x);
  return x;
}

Vector Lu::solve(const Vector& b) const { return solve(Matrix(b)).col(0); }

Vector Lu::solve_transposed(const Vector& b) const {
  // A = P^T L U, so A^T x = U^T L^T P x = b.
  Vector y = lu_.triangularView<Eigen::Upper>().transpose().solve(b);
  lu_.triangularView<Eigen::UnitLower>().transpose().solveInPlace(y);
  Vector x(y.size());
  for (Index i = 0; i < y.size(); ++i) x(perm_(i)) = y(i);
  return x;
}

Vector lu_solve(const Matrix& a, const Vector& b) { return Lu(a).solve(b); }

double condition_number(const Matrix& a) {
  const Lu lu(a);
  const Matrix inv = lu.solve(Matrix(Matrix::Identity(a.rows(), a.cols())));
  auto norm1 = [](const Matrix& m) { return m.cwiseAbs().colwise().sum().maxCoeff(); };
  return norm1(a) * norm1(inv);
}

}  // namespace nphdae::numerics
