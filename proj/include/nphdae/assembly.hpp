#pragma once

#include "nphdae/autodiff/dual.hpp"
#include "nphdae/autodiff/tape.hpp"
#include "nphdae/topology.hpp"

#include <Eigen/Core>

#include <memory>
#include <vector>

namespace nphdae {

using ad::Array;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// State x = (q_C, phi_L, e, j_V, lambda). Equation rows are ordered
// (KCL, flux, capacitor relation, voltage source relation, coupling), which is
// also the slot order of the effort vector z = (e, gradH, q, j_V, lambda).
struct StateLayout {
  Index n_c = 0;
  Index n_l = 0;
  Index n_v = 0;       // non-ground nodes
  Index n_vs = 0;      // voltage sources
  Index n_lambda = 0;  // coupling currents

  Index size() const { return n_c + n_l + n_v + n_vs + n_lambda; }
  Index differential() const { return n_c + n_l; }
  Index algebraic() const { return n_v + n_vs + n_lambda; }

  // Column offsets in x.
  Index q_begin() const { return 0; }
  Index phi_begin() const { return n_c; }
  Index e_begin() const { return n_c + n_l; }
  Index jv_begin() const { return n_c + n_l + n_v; }
  Index lambda_begin() const { return n_c + n_l + n_v + n_vs; }

  // Row (and effort slot) offsets.
  Index kcl_row() const { return 0; }
  Index flux_row() const { return n_v; }
  Index cap_row() const { return n_v + n_l; }
  Index vsrc_row() const { return n_v + n_l + n_c; }
  Index coupling_row() const { return n_v + n_l + n_c + n_vs; }

  friend bool operator==(const StateLayout&, const StateLayout&) = default;
};

struct SystemMatrices {
  Matrix e;  // n x n, columns in state order
  Matrix j;  // n x n, columns in effort order
  Matrix b;  // n x m, u = (i, v)
  StateLayout layout;
  Index n_i = 0;

  Index inputs() const { return b.cols(); }
};

// `coupling` is the n_v x n_lambda interconnection matrix; empty for a plain circuit.
SystemMatrices assemble(const IncidenceSet& inc, const Eigen::MatrixXi& coupling = {});

// Resistor voltage -> current g, charge -> capacitor voltage q, flux -> inductor
// current gradH. Every quantity is a (dimension x batch) array.
class ComponentRelations {
 public:
  using DualArray = ad::Dual<Array>;
  using Tensor = ad::Tensor;
  using DualTensor = ad::Dual<ad::Tensor>;

  virtual ~ComponentRelations() = default;

  virtual Index resistors() const = 0;
  virtual Index capacitors() const = 0;
  virtual Index inductors() const = 0;

  virtual Array g(const Array& v) const = 0;
  virtual DualArray g(const DualArray& v) const = 0;
  virtual Tensor g(const Tensor& v) const = 0;
  virtual DualTensor g(const DualTensor& v) const = 0;

  virtual Array q(const Array& c) const = 0;
  virtual DualArray q(const DualArray& c) const = 0;
  virtual Tensor q(const Tensor& c) const = 0;
  virtual DualTensor q(const DualTensor& c) const = 0;

  virtual Array grad_h(const Array& phi) const = 0;
  virtual DualArray grad_h(const DualArray& phi) const = 0;
  virtual Tensor grad_h(const Tensor& phi) const = 0;
  virtual DualTensor grad_h(const DualTensor& phi) const = 0;
};

// Implements the virtual overloads from member templates g_t, q_t, grad_h_t.
template <class D>
class RelationsBase : public ComponentRelations {
 public:
  Array g(const Array& v) const override { return self().g_t(v); }
  DualArray g(const DualArray& v) const override { return self().g_t(v); }
  Tensor g(const Tensor& v) const override { return self().g_t(v); }
  DualTensor g(const DualTensor& v) const override { return self().g_t(v); }

  Array q(const Array& c) const override { return self().q_t(c); }
  DualArray q(const DualArray& c) const override { return self().q_t(c); }
  Tensor q(const Tensor& c) const override { return self().q_t(c); }
  DualTensor q(const DualTensor& c) const override { return self().q_t(c); }

  Array grad_h(const Array& p) const override { return self().grad_h_t(p); }
  DualArray grad_h(const DualArray& p) const override { return self().grad_h_t(p); }
  Tensor grad_h(const Tensor& p) const override { return self().grad_h_t(p); }
  DualTensor grad_h(const DualTensor& p) const override { return self().grad_h_t(p); }

 private:
  const D& self() const { return static_cast<const D&>(*this); }
};

// g(v) = v / R, q(c) = c / C, H(phi) = sum phi^2 / 2L, elementwise.
class LinearRelations final : public RelationsBase<LinearRelations> {
 public:
  LinearRelations(Vector r, Vector c, Vector l);

  Index resistors() const override { return r_inv_.rows(); }
  Index capacitors() const override { return c_inv_.rows(); }
  Index inductors() const override { return l_inv_.rows(); }

  template <class T>
  T g_t(const T& v) const {
    return ad::matmul(r_inv_, v);
  }
  template <class T>
  T q_t(const T& c) const {
    return ad::matmul(c_inv_, c);
  }
  template <class T>
  T grad_h_t(const T& phi) const {
    return ad::matmul(l_inv_, phi);
  }

 private:
  Matrix r_inv_, c_inv_, l_inv_;
};

// Concatenates the relations of several subsystems, each acting on its own slice.
class StackedRelations final : public RelationsBase<StackedRelations> {
 public:
  explicit StackedRelations(std::vector<std::shared_ptr<const ComponentRelations>> parts);

  Index resistors() const override { return n_r_; }
  Index capacitors() const override { return n_c_; }
  Index inductors() const override { return n_l_; }
  const std::vector<std::shared_ptr<const ComponentRelations>>& parts() const { return parts_; }

  template <class T>
  T g_t(const T& v) const {
    return split_apply(v, &ComponentRelations::resistors, [](const ComponentRelations& r, const T& x) { return r.g(x); });
  }
  template <class T>
  T q_t(const T& c) const {
    return split_apply(c, &ComponentRelations::capacitors, [](const ComponentRelations& r, const T& x) { return r.q(x); });
  }
  template <class T>
  T grad_h_t(const T& phi) const {
    return split_apply(phi, &ComponentRelations::inductors,
                       [](const ComponentRelations& r, const T& x) { return r.grad_h(x); });
  }

 private:
  template <class T, class F>
  T split_apply(const T& x, Index (ComponentRelations::*count)() const, F&& f) const {
    std::vector<T> out;
    Index at = 0;
    for (const auto& p : parts_) {
      const Index k = ((*p).*count)();
      if (k == 0) continue;
      out.push_back(f(*p, ad::block_rows(x, at, k)));
      at += k;
    }
    if (out.empty()) return ad::block_rows(x, 0, 0);
    if (out.size() == 1) return out.front();
    return ad::vstack(std::span<const T>(out));
  }

  std::vector<std::shared_ptr<const ComponentRelations>> parts_;
  Index n_r_ = 0, n_c_ = 0, n_l_ = 0;
};

// Piecewise-constant source signal u(t) = (i(t), v(t)), held from each breakpoint on.
class SourceSignal {
 public:
  SourceSignal() = default;
  explicit SourceSignal(Vector constant);
  SourceSignal(std::vector<double> times, std::vector<Vector> values);

  Vector at(double t) const;
  Index size() const { return values_.empty() ? 0 : values_.front().size(); }
  bool is_constant() const { return values_.size() <= 1; }
  const std::vector<double>& times() const { return times_; }
  const std::vector<Vector>& values() const { return values_; }

  static SourceSignal concat(const std::vector<SourceSignal>& parts, const std::vector<Index>& current_counts);

 private:
  std::vector<double> times_;
  std::vector<Vector> values_;
};

template <class T>
struct StateBlocks {
  T qc, phi, e, jv, lam;
};

// F = J z(x) - r(x) + B u written as a sum of constant matrices applied to the
// blocks (e, gradH, q, j_V, lambda, g). `k_g` multiplies g(A_R^T e).
struct RhsForm {
  Matrix k_e, k_h, k_q, k_j, k_lambda, k_g, b;
  Matrix a_r_t, a_c_t;  // g and capacitor-relation inputs from e
};

class PhdaeSystem {
 public:
  PhdaeSystem(IncidenceSet inc, std::shared_ptr<const ComponentRelations> relations, SourceSignal sources,
              Eigen::MatrixXi coupling = {});

  const StateLayout& layout() const { return mats_.layout; }
  const SystemMatrices& matrices() const { return mats_; }
  const IncidenceSet& incidences() const { return inc_; }
  const Eigen::MatrixXi& coupling() const { return coupling_; }
  const ComponentRelations& relations() const { return *relations_; }
  std::shared_ptr<const ComponentRelations> relations_ptr() const { return relations_; }
  const SourceSignal& sources() const { return sources_; }
  const RhsForm& form() const { return form_; }
  const Matrix& a_r() const { return a_r_; }
  const Matrix& a_c() const { return a_c_; }

  PhdaeSystem with_relations(std::shared_ptr<const ComponentRelations> relations) const;
  PhdaeSystem with_sources(SourceSignal sources) const;

  template <class T>
  StateBlocks<T> split(const T& x) const;

  // x is n x batch, u is m x batch (or m x 1, broadcast).
  template <class T>
  T effort(const T& x) const;
  template <class T>
  T dissipation(const T& x) const;
  template <class T>
  T rhs(const T& x, const Array& u) const;
  template <class T>
  T rhs(const ComponentRelations& rel, const T& x, const Array& u) const;

  Array rhs_at(const Array& x, double t) const;
  Array inputs_at(double t, Index batch) const;

 private:
  void check_state(Index rows) const;

  IncidenceSet inc_;
  Eigen::MatrixXi coupling_;
  std::shared_ptr<const ComponentRelations> relations_;
  SourceSignal sources_;
  SystemMatrices mats_;
  RhsForm form_;
  Matrix a_r_, a_c_;
};

// Broadcasts an m x 1 input to `batch` columns; passes m x batch through.
Array broadcast_inputs(const Array& u, Index batch);

}  // namespace nphdae
