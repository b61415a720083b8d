#pragma once

#include "nphdae/errors.hpp"

#include <Eigen/Core>

namespace nphdae::numerics {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Thresholds shared by the factorizations below.
inline constexpr double kRankTolerance = 1e-10;   // |R_kk| relative to ||A||_F
inline constexpr double kPivotTolerance = 1e-12;  // |pivot| relative to max|A_ij|

struct QrFactors {
  Matrix q;  // p x d, orthonormal columns
  Matrix r;  // d x d, upper triangular, positive diagonal
};

struct CompleteQr {
  Matrix q;           // p x p orthogonal; the first d columns span range(A)
  Matrix r;           // d x d
  Matrix complement;  // p x (p - d), orthonormal basis of range(A)^perp
};

// Householder QR of a p x d matrix with p >= d. Throws RankError when A is not
// of full column rank.
QrFactors reduced_qr(const Matrix& a);
CompleteQr complete_qr(const Matrix& a);

// Least-squares solution R^{-1} Q^T b.
Vector lstsq(const Matrix& a, const Vector& b);
Matrix lstsq(const Matrix& a, const Matrix& b);

// LU factorization with partial pivoting.
class Lu {
 public:
  explicit Lu(const Matrix& a);

  Vector solve(const Vector& b) const;
  Matrix solve(const Matrix& b) const;
  // Solves A^T x = b.
  Vector solve_transposed(const Vector& b) const;
  Index size() const { return lu_.rows(); }

 private:
  Matrix lu_;
  Eigen::VectorXi perm_;
};

// Throws SingularMatrixError (with the failing pivot index) on a pivot below
// kPivotTolerance * max|A|.
Vector lu_solve(const Matrix& a, const Vector& b);

// Exact 1-norm condition number via an explicit inverse; intended for the small
// Jacobians handled here.
double condition_number(const Matrix& a);

}  // namespace nphdae::numerics
