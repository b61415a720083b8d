#include "nphdae/compose.hpp"
#include "nphdae/reduction.hpp"
#include "nphdae/simulate.hpp"
#include "nphdae/systems.hpp"

#include <Eigen/LU>
#include <doctest.h>

using namespace nphdae;

namespace {

Subsystem sub(const GroundTruthSpec& s) { return {s.name, s.graph, s.system()}; }

Vector consistent(const SemiExplicitSystem& se, const Vector& v0) {
  const Vector u = se.system().sources().at(0.0);
  return se.join(v0, se.consistent_init(v0, Vector::Zero(se.algebraic()), u));
}

std::vector<Subsystem> microgrid() {
  return {sub(dgu_system()), sub(dgu_system(1.0, 1.5, 2.0, 0.2, 1.1)), sub(tl_system(0.7, 0.4))};
}

// (DGU1 node 3 -> line node 1), (line node 3 -> DGU2 node 3)
std::vector<Coupling> microgrid_couplings() { return {{0, 3, 2, 1}, {2, 3, 1, 3}}; }

}  // namespace

TEST_CASE("single subsystem") {
  const GroundTruthSpec spec = dgu_system();
  const CompositeSystem cs({sub(spec)});
  const PhdaeSystem a = spec.system();
  const PhdaeSystem b = compose(cs, Eigen::MatrixXi(cs.node_rows(), 0));
  CHECK(a.matrices().e == b.matrices().e);
  CHECK(a.matrices().j == b.matrices().j);
  CHECK(a.matrices().b == b.matrices().b);
  const Array x = Array::Random(a.layout().size(), 3);
  CHECK((a.rhs(x, a.inputs_at(0.0, 1)) == b.rhs(x, b.inputs_at(0.0, 1))).all());
}

TEST_CASE("uncoupled subsystems evolve independently") {
  const GroundTruthSpec s1 = dgu_system(), s2 = dgu_system(1.0, 1.5, 2.0, 0.2, 1.1);
  const CompositeSystem cs({sub(s1), sub(s2)});
  const SemiExplicitSystem se1(s1.system()), se2(s2.system()), se(cs.system());
  const Vector x1 = consistent(se1, differential_state(s1, Vector::Constant(1, 0.3), Vector::Constant(1, -0.2)));
  const Vector x2 = consistent(se2, differential_state(s2, Vector::Constant(1, -0.5), Vector::Constant(1, 0.4)));
  const Vector x = cs.embed({x1, x2});
  CHECK(se.h(Array(x.array()), cs.system().inputs_at(0.0, 1)).abs().maxCoeff() <= 1e-12);

  const Trajectory a = rollout(se1, x1, 0.0, 500, 0.01);
  const Trajectory b = rollout(se2, x2, 0.0, 500, 0.01);
  const Trajectory c = rollout(se, x, 0.0, 500, 0.01);
  double dev = 0.0;
  for (Index k = 0; k <= 500; ++k) {
    const auto parts = cs.extract(c.states.col(k));
    dev = std::max(dev, (parts[0] - a.states.col(k)).cwiseAbs().maxCoeff());
    dev = std::max(dev, (parts[1] - b.states.col(k)).cwiseAbs().maxCoeff());
  }
  CHECK(dev <= 1e-12);
}

TEST_CASE("microgrid interconnection") {
  const CompositeSystem cs(microgrid());
  const Eigen::MatrixXi a = interconnection(cs, microgrid_couplings());
  REQUIRE(a.rows() == 9);
  REQUIRE(a.cols() == 2);
  Eigen::MatrixXi expected = Eigen::MatrixXi::Zero(9, 2);
  expected(2, 0) = 1;
  expected(6, 0) = -1;
  expected(8, 1) = 1;
  expected(5, 1) = -1;
  CHECK(a == expected);

  const PhdaeSystem sys = compose(cs, a);
  const Matrix& j = sys.matrices().j;
  CHECK((j + j.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(sys.layout().n_lambda == 2);
  const StateLayout& l = sys.layout();
  CHECK(l.size() == 2 + 3 + 9 + 2 + 2);
  // Each coupling current enters the KCL rows of exactly its two nodes with opposite signs.
  for (Index k = 0; k < 2; ++k) {
    const auto col = j.col(l.coupling_row() + k).segment(l.kcl_row(), l.n_v);
    CHECK(col.cwiseAbs().sum() == 2.0);
    CHECK(col.sum() == 0.0);
    CHECK(sys.matrices().e.col(l.lambda_begin() + k).isZero(0.0));
  }
  CHECK(sys.matrices().b.rows() == l.size());
  CHECK(sys.matrices().b.cols() == 4);

  const SemiExplicitSystem se(sys);
  CHECK(se.differential() + se.algebraic() == l.size());
}

TEST_CASE("composition matches the monolithic circuit") {
  const std::vector<Subsystem> parts = microgrid();
  const std::vector<Coupling> couplings = microgrid_couplings();
  const CompositeSystem cs(parts);
  const SemiExplicitSystem comp(compose(cs, interconnection(cs, couplings)));

  const MergedCircuit merged = merge_circuits(parts, couplings);
  CHECK(merged.graph.non_ground_count() == 3 + 3 + 1);
  const PhdaeSystem mono_sys(incidence_of(merged.graph), cs.relations(), cs.sources());
  const SemiExplicitSystem mono(mono_sys);
  CHECK(mono.differential() == comp.differential());

  Vector v0(comp.differential());
  v0 << 0.4, -0.3, 0.2, -0.1, 0.25;
  const Vector xc = consistent(comp, v0);
  const Vector xm = consistent(mono, v0);
  CHECK(comp.dh_dw_matrix(xc).fullPivLu().isInvertible());

  const Trajectory tc = rollout(comp, xc, 0.0, 1000, 0.01);
  const Trajectory tm = rollout(mono, xm, 0.0, 1000, 0.01);
  const StateLayout& lc = comp.system().layout();
  const StateLayout& lm = mono.system().layout();
  double dev = 0.0;
  for (Index k = 0; k <= 1000; ++k) {
    dev = std::max(dev, (tc.states.col(k).head(5) - tm.states.col(k).head(5)).cwiseAbs().maxCoeff());
    for (std::size_t s = 0; s < parts.size(); ++s) {
      for (Index n = 1; n < parts[s].graph.node_count(); ++n) {
        const Index rc = cs.node_row(s, n);
        const Index rm = merged.graph.row_of(merged.node_map[s][static_cast<std::size_t>(n)]);
        dev = std::max(dev, std::abs(tc.states(lc.e_begin() + rc, k) - tm.states(lm.e_begin() + rm, k)));
      }
    }
  }
  CHECK(dev <= 1e-6);
  CHECK(tc.states.col(1000).head(5) != tc.states.col(0).head(5));
}

TEST_CASE("complete graph of ten units") {
  std::vector<Subsystem> parts;
  for (int k = 0; k < 10; ++k) parts.push_back(sub(dgu_system()));
  for (int k = 0; k < 45; ++k) parts.push_back(sub(tl_system_random(static_cast<std::uint64_t>(k))));
  const CompositeSystem cs(parts);
  CHECK(cs.node_rows() == 165);
  const auto couplings = complete_graph_couplings(10, 3, 1, 3);
  const Eigen::MatrixXi a = interconnection(cs, couplings);
  CHECK(a.rows() == 165);
  CHECK(a.cols() == 90);
  const PhdaeSystem sys = compose(cs, a);
  CHECK((sys.matrices().j + sys.matrices().j.transpose()).cwiseAbs().maxCoeff() == 0.0);
  const SemiExplicitSystem se(sys);
  Vector v0 = Vector::Constant(se.differential(), 0.1);
  const Vector x0 = consistent(se, v0);
  CHECK(se.dh_dw_matrix(x0).fullPivLu().isInvertible());
}

TEST_CASE("interconnection validation") {
  const CompositeSystem cs(microgrid());
  Eigen::MatrixXi a = interconnection(cs, microgrid_couplings());
  CHECK_NOTHROW(validate_interconnection(cs, a));
  Eigen::MatrixXi bad = a;
  bad(0, 0) = 2;
  CHECK_THROWS_AS(validate_interconnection(cs, bad), ConfigError);
  bad = a;
  bad(6, 0) = 0;
  CHECK_THROWS_AS(validate_interconnection(cs, bad), ConfigError);
  CHECK_THROWS_AS(validate_interconnection(cs, a.topRows(8)), ConfigError);
  const Eigen::MatrixXi internal = interconnection(cs, {{0, 1, 0, 3}});
  CHECK_THROWS_AS(validate_interconnection(cs, internal), ConfigError);
  CHECK_NOTHROW(validate_interconnection(cs, internal, true));
  CHECK_THROWS_AS(interconnection(cs, {{0, 0, 1, 3}}), ConfigError);
  CHECK_THROWS_AS(interconnection(cs, {{0, 3, 7, 3}}), ConfigError);

  const auto back = couplings_from_json(to_json(microgrid_couplings()));
  CHECK(interconnection(cs, back) == a);
  CHECK_THROWS_AS(couplings_from_json(nlohmann::json::parse(R"([{"sub_a":0,"node_a":3,"sub_b":2,"node_c":1}])")),
                  ConfigError);
}
