#include "nphdae/assembly.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <optional>
#include <set>

namespace nphdae {

namespace {

Matrix to_real(const Eigen::MatrixXi& m) { return m.cast<double>(); }

Matrix diag_inverse(const Vector& v, const char* what) {
  for (Index i = 0; i < v.size(); ++i) {
    if (!(v(i) > 0.0)) throw ConfigError(fmt::format("{} must be positive, got {}", what, v(i)));
  }
  return v.cwiseInverse().asDiagonal();
}

template <class T>
void add_term(std::optional<T>& acc, T term) {
  if (acc) {
    acc = T(*acc + term);
  } else {
    acc = std::move(term);
  }
}

template <class T>
void add_product(std::optional<T>& acc, const Matrix& k, const T& block) {
  if (k.cols() == 0 || k.rows() == 0) return;
  if (k.isZero(0.0)) return;
  add_term(acc, T(ad::matmul(k, block)));
}

}  // namespace

SystemMatrices assemble(const IncidenceSet& inc, const Eigen::MatrixXi& coupling_in) {
  const Index nv = inc.node_rows();
  for (ComponentKind k : kAllKinds) {
    if (inc.of(k).rows() != nv) {
      throw StructureError(fmt::format("incidence matrix A_{} has {} rows, expected {}", kind_code(k), inc.of(k).rows(), nv));
    }
  }
  Eigen::MatrixXi coupling = coupling_in;
  if (coupling.size() == 0) coupling.resize(nv, 0);
  if (coupling.rows() != nv) {
    throw StructureError(fmt::format("coupling matrix has {} rows, expected {}", coupling.rows(), nv));
  }

  SystemMatrices m;
  StateLayout& l = m.layout;
  l.n_c = inc.capacitor.cols();
  l.n_l = inc.inductor.cols();
  l.n_v = nv;
  l.n_vs = inc.voltage.cols();
  l.n_lambda = coupling.cols();
  m.n_i = inc.current.cols();
  const Index n = l.size();

  const Matrix ac = to_real(inc.capacitor);
  const Matrix al = to_real(inc.inductor);
  const Matrix av = to_real(inc.voltage);
  const Matrix ai = to_real(inc.current);
  const Matrix alam = to_real(coupling);

  m.e = Matrix::Zero(n, n);
  m.e.block(l.kcl_row(), l.q_begin(), nv, l.n_c) = ac;
  m.e.block(l.flux_row(), l.phi_begin(), l.n_l, l.n_l).setIdentity();

  // Effort slots share the row offsets.
  m.j = Matrix::Zero(n, n);
  m.j.block(l.kcl_row(), l.flux_row(), nv, l.n_l) = al;
  m.j.block(l.flux_row(), l.kcl_row(), l.n_l, nv) = -al.transpose();
  m.j.block(l.kcl_row(), l.vsrc_row(), nv, l.n_vs) = -av;
  m.j.block(l.vsrc_row(), l.kcl_row(), l.n_vs, nv) = av.transpose();
  m.j.block(l.kcl_row(), l.coupling_row(), nv, l.n_lambda) = -alam;
  m.j.block(l.coupling_row(), l.kcl_row(), l.n_lambda, nv) = alam.transpose();

  m.b = Matrix::Zero(n, m.n_i + l.n_vs);
  m.b.block(l.kcl_row(), 0, nv, m.n_i) = ai;
  m.b.block(l.vsrc_row(), m.n_i, l.n_vs, l.n_vs).setIdentity();
  return m;
}

LinearRelations::LinearRelations(Vector r, Vector c, Vector l)
    : r_inv_(diag_inverse(r, "resistance")), c_inv_(diag_inverse(c, "capacitance")), l_inv_(diag_inverse(l, "inductance")) {}

StackedRelations::StackedRelations(std::vector<std::shared_ptr<const ComponentRelations>> parts) : parts_(std::move(parts)) {
  for (const auto& p : parts_) {
    if (!p) throw ConfigError("null component relations");
    n_r_ += p->resistors();
    n_c_ += p->capacitors();
    n_l_ += p->inductors();
  }
}

SourceSignal::SourceSignal(Vector constant) : times_{0.0}, values_{std::move(constant)} {}

SourceSignal::SourceSignal(std::vector<double> times, std::vector<Vector> values)
    : times_(std::move(times)), values_(std::move(values)) {
  if (times_.size() != values_.size()) throw ConfigError("source signal: times and values differ in length");
  if (values_.empty()) throw ConfigError("source signal: no values");
  for (std::size_t i = 1; i < times_.size(); ++i) {
    if (!(times_[i] > times_[i - 1])) throw ConfigError("source signal: breakpoints must increase");
    if (values_[i].size() != values_[0].size()) throw ConfigError("source signal: inconsistent value sizes");
  }
}

Vector SourceSignal::at(double t) const {
  if (values_.empty()) return Vector();
  // Before the first breakpoint the first value applies.
  auto it = std::upper_bound(times_.begin(), times_.end(), t);
  const std::size_t idx = it == times_.begin() ? 0 : static_cast<std::size_t>(it - times_.begin()) - 1;
  return values_[idx];
}

SourceSignal SourceSignal::concat(const std::vector<SourceSignal>& parts, const std::vector<Index>& current_counts) {
  if (parts.size() != current_counts.size()) throw ConfigError("source concat: count mismatch");
  std::set<double> breaks;
  for (const auto& p : parts) breaks.insert(p.times().begin(), p.times().end());
  if (breaks.empty()) breaks.insert(0.0);
  Index n_i = 0, n_v = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    n_i += current_counts[k];
    n_v += parts[k].size() - current_counts[k];
  }
  std::vector<double> times(breaks.begin(), breaks.end());
  std::vector<Vector> values;
  for (double t : times) {
    Vector u(n_i + n_v);
    Index at_i = 0, at_v = n_i;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const Vector uk = parts[k].at(t);
      const Index ci = current_counts[k];
      const Index cv = uk.size() - ci;
      u.segment(at_i, ci) = uk.head(ci);
      u.segment(at_v, cv) = uk.tail(cv);
      at_i += ci;
      at_v += cv;
    }
    values.push_back(u);
  }
  return SourceSignal(std::move(times), std::move(values));
}

Array broadcast_inputs(const Array& u, Index batch) {
  if (u.cols() == batch) return u;
  if (u.cols() != 1) throw StructureError(fmt::format("inputs have {} columns, expected 1 or {}", u.cols(), batch));
  return u.replicate(1, batch);
}

PhdaeSystem::PhdaeSystem(IncidenceSet inc, std::shared_ptr<const ComponentRelations> relations, SourceSignal sources,
                         Eigen::MatrixXi coupling)
    : inc_(std::move(inc)), coupling_(std::move(coupling)), relations_(std::move(relations)), sources_(std::move(sources)) {
  if (auto diag = validate(inc_); !diag.empty()) throw StructureError("invalid incidence set: " + diag.front());
  mats_ = assemble(inc_, coupling_);
  if (coupling_.size() == 0) coupling_.resize(inc_.node_rows(), 0);
  for (Index c = 0; c < coupling_.cols(); ++c) {
    if ((coupling_.col(c).array() == 1).count() != 1 || (coupling_.col(c).array() == -1).count() != 1 ||
        (coupling_.col(c).array() != 0).count() != 2) {
      throw StructureError(fmt::format("coupling column {} must hold exactly one +1 and one -1", c));
    }
  }
  if (!relations_) throw ConfigError("missing component relations");
  if (relations_->resistors() != inc_.resistor.cols() || relations_->capacitors() != inc_.capacitor.cols() ||
      relations_->inductors() != inc_.inductor.cols()) {
    throw StructureError(fmt::format("relations sized (R={}, C={}, L={}) do not match circuit (R={}, C={}, L={})",
                                     relations_->resistors(), relations_->capacitors(), relations_->inductors(),
                                     inc_.resistor.cols(), inc_.capacitor.cols(), inc_.inductor.cols()));
  }
  if (sources_.size() != mats_.inputs()) {
    throw StructureError(fmt::format("source signal has {} entries, circuit needs {}", sources_.size(), mats_.inputs()));
  }

  const StateLayout& l = mats_.layout;
  const Index n = l.size();
  a_r_ = to_real(inc_.resistor);
  a_c_ = to_real(inc_.capacitor);
  form_.k_e = mats_.j.middleCols(l.kcl_row(), l.n_v);
  form_.k_e.middleRows(l.cap_row(), l.n_c) -= a_c_.transpose();
  form_.k_h = mats_.j.middleCols(l.flux_row(), l.n_l);
  form_.k_q = mats_.j.middleCols(l.cap_row(), l.n_c);
  form_.k_q.middleRows(l.cap_row(), l.n_c) += Matrix::Identity(l.n_c, l.n_c);
  form_.k_j = mats_.j.middleCols(l.vsrc_row(), l.n_vs);
  form_.k_lambda = mats_.j.middleCols(l.coupling_row(), l.n_lambda);
  form_.k_g = Matrix::Zero(n, a_r_.cols());
  form_.k_g.middleRows(l.kcl_row(), l.n_v) = -a_r_;
  form_.b = mats_.b;
  form_.a_r_t = a_r_.transpose();
  form_.a_c_t = a_c_.transpose();
}

PhdaeSystem PhdaeSystem::with_relations(std::shared_ptr<const ComponentRelations> relations) const {
  return PhdaeSystem(inc_, std::move(relations), sources_, coupling_);
}

PhdaeSystem PhdaeSystem::with_sources(SourceSignal sources) const {
  return PhdaeSystem(inc_, relations_, std::move(sources), coupling_);
}

void PhdaeSystem::check_state(Index rows) const {
  if (rows != layout().size()) {
    throw StructureError(fmt::format("state has {} rows, system has dimension {}", rows, layout().size()));
  }
}

template <class T>
StateBlocks<T> PhdaeSystem::split(const T& x) const {
  check_state(ad::rows(x));
  const StateLayout& l = layout();
  return {ad::block_rows(x, l.q_begin(), l.n_c), ad::block_rows(x, l.phi_begin(), l.n_l),
          ad::block_rows(x, l.e_begin(), l.n_v), ad::block_rows(x, l.jv_begin(), l.n_vs),
          ad::block_rows(x, l.lambda_begin(), l.n_lambda)};
}

template <class T>
T PhdaeSystem::effort(const T& x) const {
  const StateBlocks<T> b = split(x);
  const StateLayout& l = layout();
  std::vector<T> parts{b.e};
  parts.push_back(l.n_l > 0 ? relations_->grad_h(b.phi) : b.phi);
  parts.push_back(l.n_c > 0 ? relations_->q(b.qc) : b.qc);
  parts.push_back(b.jv);
  parts.push_back(b.lam);
  return ad::vstack(std::span<const T>(parts));
}

template <class T>
T PhdaeSystem::dissipation(const T& x) const {
  const StateBlocks<T> b = split(x);
  const StateLayout& l = layout();
  const Index batch = ad::cols(x);
  T kcl = ad::lift(x, Array::Zero(l.n_v, batch));
  if (a_r_.cols() > 0) kcl = ad::matmul(a_r_, relations_->g(T(ad::matmul(form_.a_r_t, b.e))));
  T cap = b.qc;
  if (l.n_c > 0) cap = T(ad::matmul(form_.a_c_t, b.e) - relations_->q(b.qc));
  std::vector<T> parts{kcl, ad::lift(x, Array::Zero(l.n_l, batch)), cap, ad::lift(x, Array::Zero(l.n_vs, batch)),
                       ad::lift(x, Array::Zero(l.n_lambda, batch))};
  return ad::vstack(std::span<const T>(parts));
}

template <class T>
T PhdaeSystem::rhs(const T& x, const Array& u) const {
  return rhs(*relations_, x, u);
}

template <class T>
T PhdaeSystem::rhs(const ComponentRelations& rel, const T& x, const Array& u) const {
  const StateBlocks<T> b = split(x);
  const StateLayout& l = layout();
  const Index batch = ad::cols(x);
  std::optional<T> acc;
  add_term(acc, ad::lift(x, Array((form_.b * broadcast_inputs(u, batch).matrix()).array())));
  add_product(acc, form_.k_e, b.e);
  add_product(acc, form_.k_j, b.jv);
  add_product(acc, form_.k_lambda, b.lam);
  if (l.n_l > 0) add_product(acc, form_.k_h, T(rel.grad_h(b.phi)));
  if (l.n_c > 0) add_product(acc, form_.k_q, T(rel.q(b.qc)));
  if (a_r_.cols() > 0) add_product(acc, form_.k_g, T(rel.g(T(ad::matmul(form_.a_r_t, b.e)))));
  return *acc;
}

Array PhdaeSystem::inputs_at(double t, Index batch) const {
  const Vector u = sources_.at(t);
  return Array(u.array()).replicate(1, batch);
}

Array PhdaeSystem::rhs_at(const Array& x, double t) const { return rhs(x, inputs_at(t, x.cols())); }

#define NPHDAE_INSTANTIATE(T)                                                                  \
  template StateBlocks<T> PhdaeSystem::split<T>(const T&) const;                              \
  template T PhdaeSystem::effort<T>(const T&) const;                                          \
  template T PhdaeSystem::dissipation<T>(const T&) const;                                     \
  template T PhdaeSystem::rhs<T>(const T&, const Array&) const;                               \
  template T PhdaeSystem::rhs<T>(const ComponentRelations&, const T&, const Array&) const;

NPHDAE_INSTANTIATE(Array)
NPHDAE_INSTANTIATE(ad::Dual<Array>)
NPHDAE_INSTANTIATE(ad::Tensor)
NPHDAE_INSTANTIATE(ad::Dual<ad::Tensor>)

#undef NPHDAE_INSTANTIATE

}  // namespace nphdae
