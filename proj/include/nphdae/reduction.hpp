#pragma once

#include "nphdae/assembly.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

namespace nphdae {

struct Classification {
  std::vector<Index> diff_rows;    // rows of E with a nonzero entry
  std::vector<Index> alg_rows;     // identically zero rows of E
  std::vector<Index> diff_states;  // (q_C, phi_L)
  std::vector<Index> alg_states;   // (e, j_V, lambda)
};

// Splits rows and states of E. Throws StructureError when there are no
// differential states, when E touches algebraic columns, or when fewer
// differential rows than differential states exist.
Classification classify(const Matrix& e, const StateLayout& layout);

// Semi-explicit form v' = f(v, w, u), 0 = h(v, w, u) with v = x[0:d], w = x[d:n].
// f = R^{-1} Q^T F_diff from the reduced QR of E_bar = E[diff_rows, diff_states];
// h stacks F on the zero rows of E and, when E_bar is tall, the components of
// F_diff orthogonal to range(E_bar).
class SemiExplicitSystem {
 public:
  explicit SemiExplicitSystem(PhdaeSystem system);

  const PhdaeSystem& system() const { return system_; }
  const Classification& classification() const { return cls_; }
  Index differential() const { return d_; }
  Index algebraic() const { return a_; }
  Index size() const { return d_ + a_; }
  const Matrix& e_bar() const { return e_bar_; }
  const Matrix& q() const { return q_; }
  const Matrix& r() const { return r_; }
  const Matrix& complement() const { return complement_; }

  SemiExplicitSystem with_relations(std::shared_ptr<const ComponentRelations> relations) const;

  template <class T>
  T f(const ComponentRelations& rel, const T& x, const Array& u) const;
  template <class T>
  T h(const ComponentRelations& rel, const T& x, const Array& u) const;
  template <class T>
  T f(const T& x, const Array& u) const {
    return f(system_.relations(), x, u);
  }
  template <class T>
  T h(const T& x, const Array& u) const {
    return h(system_.relations(), x, u);
  }

  // Per-sample a x a Jacobians dh/dw, one column-major matrix per column.
  template <class T>
  T dh_dw(const ComponentRelations& rel, const T& x) const;

  // Index-reduced field (v', w') with w' = -(dh/dw)^{-1} (dh/dv f) under a
  // zero-order hold on u. Singular samples get w' = 0 and are flagged in
  // `singular`; without a mask they throw.
  template <class T>
  T field(const ComponentRelations& rel, const T& x, const Array& u, std::vector<std::uint8_t>* singular = nullptr) const;

  // Field and h at the same state from one set of relation evaluations.
  template <class T>
  std::pair<T, T> field_and_h(const ComponentRelations& rel, const T& x, const Array& u,
                              std::vector<std::uint8_t>* singular = nullptr) const;

  Array field(const Array& x, const Array& u) const;
  Matrix dh_dw_matrix(const Vector& x) const;
  Matrix dh_dv_matrix(const Vector& x, const Vector& u) const;

  // Newton iteration on w for h(v0, w, u) = 0, with step halving.
  Vector consistent_init(const Vector& v0, const Vector& w_guess, const Vector& u, int* iterations = nullptr) const;
  Vector join(const Vector& v, const Vector& w) const;

  static constexpr int kNewtonIterations = 50;
  static constexpr int kMaxHalvings = 30;
  static constexpr double kNewtonTolerance = 1e-10;

 private:
  struct Projected {
    Matrix k_e, k_h, k_q, k_j, k_lambda, k_g, b;
  };
  template <class T>
  struct Efforts {
    std::optional<T> grad_h, q, g;
  };
  template <class T>
  Efforts<T> efforts(const ComponentRelations& rel, const StateBlocks<T>& b, bool with_g) const;
  template <class T>
  T project(const Projected& p, const StateBlocks<T>& b, const Efforts<T>& ev, const Array& u, Index batch) const;
  template <class T>
  T jacobian_w(const StateBlocks<T>& b, const std::vector<T>& g_cols) const;
  template <class T>
  std::vector<ad::Dual<T>> g_directions(const ComponentRelations& rel, const T& g_in) const;

  PhdaeSystem system_;
  Classification cls_;
  Index d_ = 0;
  Index a_ = 0;
  Matrix e_bar_, q_, r_, complement_;
  Projected pf_, ph_;
};

}  // namespace nphdae
