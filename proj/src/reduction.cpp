#include "nphdae/reduction.hpp"

#include "nphdae/numerics.hpp"

#include <fmt/format.h>

#include <cmath>
#include <optional>
#include <sstream>

namespace nphdae {

namespace {

template <class T>
void accumulate(std::optional<T>& acc, T term) {
  if (acc) {
    acc = T(*acc + term);
  } else {
    acc = std::move(term);
  }
}

template <class T>
void accumulate_product(std::optional<T>& acc, const Matrix& k, const T& block) {
  if (k.rows() == 0 || k.cols() == 0 || k.isZero(0.0)) return;
  accumulate(acc, T(ad::matmul(k, block)));
}

std::string describe(const Array& col) {
  std::ostringstream os;
  os.precision(6);
  os << "[";
  for (Index i = 0; i < col.rows(); ++i) os << (i ? ", " : "") << col(i, 0);
  os << "]";
  return os.str();
}

}  // namespace

Classification classify(const Matrix& e, const StateLayout& layout) {
  const Index n = layout.size();
  if (e.rows() != n || e.cols() != n) {
    throw StructureError(fmt::format("E is {}x{}, layout has dimension {}", e.rows(), e.cols(), n));
  }
  const Index d = layout.differential();
  if (d == 0) throw StructureError("no differential states (circuit has no capacitors or inductors)");
  if (e.rightCols(n - d).cwiseAbs().maxCoeff() > 0.0 && n > d) {
    throw StructureError("E has nonzero entries in algebraic state columns");
  }
  Classification c;
  for (Index i = 0; i < n; ++i) {
    if (e.row(i).cwiseAbs().maxCoeff() > 0.0) {
      c.diff_rows.push_back(i);
    } else {
      c.alg_rows.push_back(i);
    }
  }
  if (static_cast<Index>(c.diff_rows.size()) < d) {
    throw StructureError(fmt::format("{} differential rows for {} differential states", c.diff_rows.size(), d));
  }
  for (Index i = 0; i < d; ++i) c.diff_states.push_back(i);
  for (Index i = d; i < n; ++i) c.alg_states.push_back(i);
  return c;
}

SemiExplicitSystem::SemiExplicitSystem(PhdaeSystem system) : system_(std::move(system)) {
  const StateLayout& l = system_.layout();
  cls_ = classify(system_.matrices().e, l);
  const Index n = l.size();
  d_ = l.differential();
  a_ = n - d_;
  const Index p = static_cast<Index>(cls_.diff_rows.size());

  e_bar_.resize(p, d_);
  for (Index i = 0; i < p; ++i) e_bar_.row(i) = system_.matrices().e.row(cls_.diff_rows[static_cast<std::size_t>(i)]).head(d_);
  const numerics::CompleteQr qr = numerics::complete_qr(e_bar_);
  q_ = qr.q.leftCols(d_);
  r_ = qr.r;
  complement_ = qr.complement;

  Matrix pf = Matrix::Zero(d_, n);
  Matrix ph = Matrix::Zero(a_, n);
  const Matrix rinv_qt = r_.triangularView<Eigen::Upper>().solve(Matrix(q_.transpose()));
  for (Index i = 0; i < p; ++i) {
    const Index row = cls_.diff_rows[static_cast<std::size_t>(i)];
    pf.col(row) = rinv_qt.col(i);
  }
  Index at = 0;
  for (Index row : cls_.alg_rows) ph(at++, row) = 1.0;
  for (Index k = 0; k < p - d_; ++k, ++at) {
    for (Index i = 0; i < p; ++i) ph(at, cls_.diff_rows[static_cast<std::size_t>(i)]) = complement_(i, k);
  }

  const RhsForm& form = system_.form();
  auto project_form = [&form](const Matrix& m) {
    return Projected{m * form.k_e, m * form.k_h, m * form.k_q, m * form.k_j, m * form.k_lambda, m * form.k_g, m * form.b};
  };
  pf_ = project_form(pf);
  ph_ = project_form(ph);
}

SemiExplicitSystem SemiExplicitSystem::with_relations(std::shared_ptr<const ComponentRelations> relations) const {
  return SemiExplicitSystem(system_.with_relations(std::move(relations)));
}

template <class T>
SemiExplicitSystem::Efforts<T> SemiExplicitSystem::efforts(const ComponentRelations& rel, const StateBlocks<T>& b,
                                                           bool with_g) const {
  Efforts<T> out;
  if (system_.layout().n_l > 0) out.grad_h = rel.grad_h(b.phi);
  if (system_.layout().n_c > 0) out.q = rel.q(b.qc);
  if (with_g && system_.a_r().cols() > 0) out.g = rel.g(T(ad::matmul(system_.form().a_r_t, b.e)));
  return out;
}

template <class T>
T SemiExplicitSystem::project(const Projected& p, const StateBlocks<T>& b, const Efforts<T>& ev, const Array& u,
                              Index batch) const {
  std::optional<T> acc;
  accumulate(acc, ad::lift(b.e, Array((p.b * broadcast_inputs(u, batch).matrix()).array())));
  accumulate_product(acc, p.k_e, b.e);
  accumulate_product(acc, p.k_j, b.jv);
  accumulate_product(acc, p.k_lambda, b.lam);
  if (ev.grad_h) accumulate_product(acc, p.k_h, *ev.grad_h);
  if (ev.q) accumulate_product(acc, p.k_q, *ev.q);
  if (ev.g) accumulate_product(acc, p.k_g, *ev.g);
  return *acc;
}

template <class T>
T SemiExplicitSystem::f(const ComponentRelations& rel, const T& x, const Array& u) const {
  const StateBlocks<T> b = system_.split(x);
  return project(pf_, b, efforts(rel, b, true), u, ad::cols(x));
}

template <class T>
T SemiExplicitSystem::h(const ComponentRelations& rel, const T& x, const Array& u) const {
  const StateBlocks<T> b = system_.split(x);
  return project(ph_, b, efforts(rel, b, true), u, ad::cols(x));
}

template <class T>
std::vector<ad::Dual<T>> SemiExplicitSystem::g_directions(const ComponentRelations& rel, const T& g_in) const {
  const Index nr = ad::rows(g_in);
  const Index batch = ad::cols(g_in);
  std::vector<ad::Dual<T>> out;
  out.reserve(static_cast<std::size_t>(nr));
  for (Index j = 0; j < nr; ++j) {
    Array dir = Array::Zero(nr, batch);
    dir.row(j).setOnes();
    out.push_back(rel.g(ad::Dual<T>(g_in, ad::lift(g_in, std::move(dir)))));
  }
  return out;
}

template <class T>
T SemiExplicitSystem::jacobian_w(const StateBlocks<T>& b, const std::vector<T>& g_cols) const {
  const StateLayout& l = system_.layout();
  const Index batch = ad::cols(b.e);
  const Matrix& a_r = system_.a_r();
  std::vector<T> weighted;
  weighted.reserve(g_cols.size());
  for (const T& gc : g_cols) weighted.push_back(ad::matmul(ph_.k_g, gc));

  std::vector<T> columns;
  columns.reserve(static_cast<std::size_t>(a_));
  auto constant_col = [&](const Matrix& k, Index c) { return ad::lift(b.e, Array(k.col(c).array().replicate(1, batch))); };
  for (Index k = 0; k < l.n_v; ++k) {
    T col = constant_col(ph_.k_e, k);
    for (Index j = 0; j < a_r.cols(); ++j) {
      const double coef = a_r(k, j);
      if (coef == 0.0) continue;
      col = T(col + weighted[static_cast<std::size_t>(j)] * coef);
    }
    columns.push_back(std::move(col));
  }
  for (Index k = 0; k < l.n_vs; ++k) columns.push_back(constant_col(ph_.k_j, k));
  for (Index k = 0; k < l.n_lambda; ++k) columns.push_back(constant_col(ph_.k_lambda, k));
  return ad::vstack(std::span<const T>(columns));
}

template <class T>
T SemiExplicitSystem::dh_dw(const ComponentRelations& rel, const T& x) const {
  const StateBlocks<T> b = system_.split(x);
  std::vector<T> g_cols;
  if (system_.a_r().cols() > 0) {
    for (const auto& dg : g_directions(rel, T(ad::matmul(system_.form().a_r_t, b.e)))) g_cols.push_back(ad::tangent_or_zero(dg));
  }
  return jacobian_w(b, g_cols);
}

template <class T>
std::pair<T, T> SemiExplicitSystem::field_and_h(const ComponentRelations& rel, const T& x, const Array& u,
                                                std::vector<std::uint8_t>* singular) const {
  const StateLayout& l = system_.layout();
  const StateBlocks<T> b = system_.split(x);
  const Index batch = ad::cols(x);

  Efforts<T> ev = efforts(rel, b, false);
  std::vector<T> g_cols;
  if (system_.a_r().cols() > 0) {
    auto dirs = g_directions(rel, T(ad::matmul(system_.form().a_r_t, b.e)));
    ev.g = dirs.front().v;
    for (const auto& dg : dirs) g_cols.push_back(ad::tangent_or_zero(dg));
  }
  const T fv = project(pf_, b, ev, u, batch);
  const T hv = project(ph_, b, ev, u, batch);

  std::optional<T> hvf;
  if (l.n_l > 0) {
    const auto hd = rel.grad_h(ad::Dual<T>(b.phi, ad::block_rows(fv, l.n_c, l.n_l)));
    accumulate_product(hvf, ph_.k_h, ad::tangent_or_zero(hd));
  }
  if (l.n_c > 0) {
    const auto qd = rel.q(ad::Dual<T>(b.qc, ad::block_rows(fv, 0, l.n_c)));
    accumulate_product(hvf, ph_.k_q, ad::tangent_or_zero(qd));
  }
  if (!hvf) hvf = ad::lift(x, Array::Zero(a_, batch));

  const T mats = jacobian_w(b, g_cols);
  const T wdot = ad::batched_solve(mats, *hvf, singular);
  return {ad::vstack({fv, T(-wdot)}), hv};
}

template <class T>
T SemiExplicitSystem::field(const ComponentRelations& rel, const T& x, const Array& u,
                            std::vector<std::uint8_t>* singular) const {
  return field_and_h(rel, x, u, singular).first;
}

Array SemiExplicitSystem::field(const Array& x, const Array& u) const {
  std::vector<std::uint8_t> mask;
  Array out = field(system_.relations(), x, u, &mask);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) {
      throw SingularMatrixError(
          fmt::format("dh/dw is singular at state {}", describe(x.col(static_cast<Index>(i)))), -1);
    }
  }
  return out;
}

Matrix SemiExplicitSystem::dh_dw_matrix(const Vector& x) const {
  const Array m = dh_dw(system_.relations(), Array(x.array()));
  return Eigen::Map<const Matrix>(m.data(), a_, a_);
}

Matrix SemiExplicitSystem::dh_dv_matrix(const Vector& x, const Vector& u) const {
  const Array ua = u.array();
  Matrix jac(a_, d_);
  for (Index i = 0; i < d_; ++i) {
    Array dir = Array::Zero(x.size(), 1);
    dir(i, 0) = 1.0;
    const auto out = h(ad::Dual<Array>(Array(x.array()), dir), ua);
    jac.col(i) = ad::tangent_or_zero(out).matrix();
  }
  return jac;
}

Vector SemiExplicitSystem::join(const Vector& v, const Vector& w) const {
  if (v.size() != d_ || w.size() != a_) {
    throw StructureError(fmt::format("state split ({}, {}) does not match ({}, {})", v.size(), w.size(), d_, a_));
  }
  Vector x(d_ + a_);
  x << v, w;
  return x;
}

Vector SemiExplicitSystem::consistent_init(const Vector& v0, const Vector& w_guess, const Vector& u,
                                           int* iterations) const {
  const Array ua = u.array();
  Vector w = w_guess;
  auto residual = [&](const Vector& wv) {
    const Array hv = h(Array(join(v0, wv).array()), ua);
    return std::pair{Vector(hv.matrix()), hv.size() ? hv.abs().maxCoeff() : 0.0};
  };
  auto [hv, res] = residual(w);
  for (int it = 0; it < kNewtonIterations; ++it) {
    if (iterations) *iterations = it;
    if (!std::isfinite(res)) break;
    if (res <= kNewtonTolerance) return w;
    Vector delta;
    try {
      delta = numerics::lu_solve(dh_dw_matrix(join(v0, w)), hv);
    } catch (const SingularMatrixError& e) {
      throw ConvergenceError(fmt::format("consistent initialization: {}", e.what()), res);
    }
    double step = 1.0;
    bool accepted = false;
    for (int k = 0; k <= kMaxHalvings; ++k, step *= 0.5) {
      const Vector trial = w - step * delta;
      auto [h_new, r_new] = residual(trial);
      if (std::isfinite(r_new) && r_new < res) {
        w = trial;
        hv = h_new;
        res = r_new;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    if (iterations) *iterations = it + 1;
  }
  if (res <= kNewtonTolerance) return w;
  throw ConvergenceError(fmt::format("consistent initialization did not converge (|h|_inf = {:.3e})", res), res);
}

template Array SemiExplicitSystem::f<Array>(const ComponentRelations&, const Array&, const Array&) const;
template ad::Dual<Array> SemiExplicitSystem::f<ad::Dual<Array>>(const ComponentRelations&, const ad::Dual<Array>&,
                                                                 const Array&) const;
template ad::Tensor SemiExplicitSystem::f<ad::Tensor>(const ComponentRelations&, const ad::Tensor&, const Array&) const;
template Array SemiExplicitSystem::h<Array>(const ComponentRelations&, const Array&, const Array&) const;
template ad::Dual<Array> SemiExplicitSystem::h<ad::Dual<Array>>(const ComponentRelations&, const ad::Dual<Array>&,
                                                                 const Array&) const;
template ad::Tensor SemiExplicitSystem::h<ad::Tensor>(const ComponentRelations&, const ad::Tensor&, const Array&) const;
template ad::Dual<ad::Tensor> SemiExplicitSystem::h<ad::Dual<ad::Tensor>>(const ComponentRelations&,
                                                                           const ad::Dual<ad::Tensor>&, const Array&) const;
template Array SemiExplicitSystem::dh_dw<Array>(const ComponentRelations&, const Array&) const;
template ad::Tensor SemiExplicitSystem::dh_dw<ad::Tensor>(const ComponentRelations&, const ad::Tensor&) const;
template Array SemiExplicitSystem::field<Array>(const ComponentRelations&, const Array&, const Array&,
                                                std::vector<std::uint8_t>*) const;
template ad::Tensor SemiExplicitSystem::field<ad::Tensor>(const ComponentRelations&, const ad::Tensor&, const Array&,
                                                          std::vector<std::uint8_t>*) const;
template std::pair<Array, Array> SemiExplicitSystem::field_and_h<Array>(const ComponentRelations&, const Array&,
                                                                        const Array&, std::vector<std::uint8_t>*) const;
template std::pair<ad::Tensor, ad::Tensor> SemiExplicitSystem::field_and_h<ad::Tensor>(
    const ComponentRelations&, const ad::Tensor&, const Array&, std::vector<std::uint8_t>*) const;

}  // namespace nphdae
