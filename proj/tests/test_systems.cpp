#include "nphdae/systems.hpp"

#include <doctest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace nphdae;

namespace {

struct FhnOracle {
  double max_v_err = 0.0;
  double max_w_err = 0.0;
};

FhnOracle run_fhn_oracle(double v0, double w0, Index steps, double dt) {
  const GroundTruthSpec spec = fhn_system();
  const SemiExplicitSystem se(spec.system());
  const double l = spec.inductance(0);
  const Vector v = differential_state(spec, Vector::Constant(1, v0), Vector::Constant(1, w0));
  const Vector w = se.consistent_init(v, Vector::Zero(se.algebraic()), spec.sources.at(0));
  const Trajectory tr = rollout(se, se.join(v, w), 0.0, steps, dt);
  const Index e1 = se.system().layout().e_begin();

  Array y(2, 1);
  y << v0, w0;
  auto ode = [](const Array& s) {
    const FhnRates r = fhn_ode_rhs(s(0, 0), s(1, 0));
    Array out(2, 1);
    out << r.v_dot, r.w_dot;
    return out;
  };
  FhnOracle o;
  for (Index k = 0; k <= steps; ++k) {
    o.max_v_err = std::max(o.max_v_err, std::abs(tr.states(e1, k) - y(0, 0)));
    o.max_w_err = std::max(o.max_w_err, std::abs(tr.states(1, k) / l - y(1, 0)));
    y = rk4(ode, y, dt);
  }
  return o;
}

}  // namespace

TEST_CASE("FHN relation values") {
  const GroundTruthSpec spec = fhn_system();
  Array v(2, 1);
  v << 1.5, 0.8;
  const Array g = spec.relations->g(v);
  CHECK(g(0, 0) == doctest::Approx(-0.375));
  CHECK(g(1, 0) == doctest::Approx(1.0));
  CHECK(spec.relations->grad_h(Array::Constant(1, 1, 2.0))(0, 0) == doctest::Approx(0.16));
  v << 3.0, 0.0;
  CHECK(spec.relations->g(v)(0, 0) == doctest::Approx(6.0));
}

TEST_CASE("FHN ODE right-hand side") {
  FhnRates r = fhn_ode_rhs(0, 0);
  CHECK(r.v_dot == doctest::Approx(1.0));
  CHECK(r.w_dot == doctest::Approx(0.056));
  r = fhn_ode_rhs(1, 1.25);
  CHECK(r.v_dot == doctest::Approx(1 - 1.0 / 3 - 1.25 + 1));

  // Newton on the equilibrium: W = (V + 0.7) / 0.8 and V - V^3/3 - W + 1 = 0.
  double v = 0.0;
  for (int i = 0; i < 50; ++i) {
    const double f = v - v * v * v / 3 - (v + 0.7) / 0.8 + 1.0;
    const double df = 1 - v * v - 1 / 0.8;
    v -= f / df;
  }
  r = fhn_ode_rhs(v, (v + 0.7) / 0.8);
  CHECK(std::abs(r.v_dot) <= 1e-10);
  CHECK(std::abs(r.w_dot) <= 1e-10);
}

TEST_CASE("FHN oracle equivalence") {
  const auto start = std::chrono::steady_clock::now();
  for (auto [v0, w0] : {std::pair{0.5, -0.3}, std::pair{-2.5, 2.0}, std::pair{2.9, 0.1}}) {
    const FhnOracle o = run_fhn_oracle(v0, w0, 10000, 0.01);
    CHECK(o.max_v_err <= 1e-6);
    CHECK(o.max_w_err <= 1e-6);
  }
  CHECK(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() < 15.0);
}

TEST_CASE("DGU and TL structure") {
  const GroundTruthSpec dgu = dgu_system();
  const IncidenceSet inc = incidence_of(dgu.graph);
  CHECK(inc.voltage(0, 0) == 1);
  const PhdaeSystem sys = dgu.system();
  CHECK(sys.layout().differential() == 2);
  CHECK(sys.layout().algebraic() == 4);

  const GroundTruthSpec tl = tl_system(0.5, 1.5);
  const PhdaeSystem tls = tl.system();
  CHECK(tls.layout().size() == 4);
  CHECK(tls.layout().n_c == 0);
  CHECK(tls.matrices().inputs() == 0);

  const GroundTruthSpec r1 = tl_system_random(3);
  const GroundTruthSpec r2 = tl_system_random(3);
  CHECK(r1.parameters == r2.parameters);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto p = tl_system_random(s).parameters;
    CHECK(p["R"].get<double>() >= 0.1);
    CHECK(p["R"].get<double>() <= 2.0);
    CHECK(p["L"].get<double>() >= 0.1);
    CHECK(p["L"].get<double>() <= 2.0);
  }
  CHECK_THROWS_AS(dgu_system(-1.0), ConfigError);
  CHECK_THROWS_AS(system_by_name("nope"), ConfigError);
}

TEST_CASE("dataset generation") {
  const GroundTruthSpec spec = fhn_system();
  GenerateOptions opt;
  opt.trajectories = 3;
  opt.steps = 50;
  opt.dt = 0.1;
  opt.seed = 7;
  const Dataset a = generate_dataset(spec, opt);
  const Dataset b = generate_dataset(spec, opt);
  REQUIRE(a.trajectories.size() == 3);
  CHECK(a.sample_count() == 150);
  for (std::size_t i = 0; i < 3; ++i) CHECK(a.trajectories[i].states == b.trajectories[i].states);

  // Noise-free states satisfy the constraints.
  const SemiExplicitSystem se(spec.system());
  for (const auto& t : a.trajectories) {
    const Array hv = se.h(Array(t.states.array()), Array(t.inputs.array()));
    CHECK(hv.abs().maxCoeff() <= 1e-8);
    const double v0 = t.states(se.system().layout().e_begin(), 0);
    CHECK(v0 >= -3.0);
    CHECK(v0 <= 3.0);
  }

  opt.noise_var = 0.01;
  const Dataset noisy = generate_dataset(spec, opt);
  CHECK(noisy.manifest["noise_var"] == 0.01);
  Matrix diff = noisy.trajectories[0].states - a.trajectories[0].states;
  const double var = diff.squaredNorm() / static_cast<double>(diff.size());
  CHECK(var == doctest::Approx(0.01).epsilon(0.3));

  const auto dir = std::filesystem::temp_directory_path() / "nphdae_test_dataset";
  std::filesystem::remove_all(dir);
  save_dataset(dir.string(), a);
  const Dataset loaded = load_dataset(dir.string());
  REQUIRE(loaded.trajectories.size() == 3);
  CHECK(loaded.trajectories[1].states == a.trajectories[1].states);
  CHECK(loaded.manifest["seed"] == 7);

  const SampleSet s = a.samples();
  CHECK(s.x.cols() == 150);
  CHECK((s.y.col(0) - Array(a.trajectories[0].states.col(1).array())).abs().maxCoeff() == 0.0);
  std::filesystem::remove_all(dir);
}
