#include "nphdae/simulate.hpp"
#include "nphdae/systems.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

using namespace nphdae;

namespace {

Array scalar(double v) { return Array::Constant(1, 1, v); }

double logistic_error(double dt) {
  // y' = y (1 - y), y(0) = 0.1, exact y = 1 / (1 + 9 e^{-t}).
  const VectorField f = [](const Array& y, const Array&, double) { return Array(y * (1.0 - y)); };
  Array y = scalar(0.1);
  const int steps = static_cast<int>(std::lround(2.0 / dt));
  for (int k = 0; k < steps; ++k) y = rk4_step(f, y, Array(0, 1), k * dt, dt);
  return std::abs(y(0, 0) - 1.0 / (1.0 + 9.0 * std::exp(-2.0)));
}

}  // namespace

TEST_CASE("rk4 step examples") {
  const VectorField grow = [](const Array& y, const Array&, double) { return y; };
  CHECK(rk4_step(grow, scalar(1.0), Array(0, 1), 0.0, 0.1)(0, 0) == doctest::Approx(1.1051708333333333).epsilon(1e-15));
  const VectorField still = [](const Array& y, const Array&, double) { return Array(Array::Zero(y.rows(), y.cols())); };
  CHECK(rk4_step(still, scalar(3.5), Array(0, 1), 0.0, 0.1)(0, 0) == 3.5);
  const VectorField constant = [](const Array& y, const Array&, double) { return Array(Array::Constant(y.rows(), y.cols(), 2.0)); };
  CHECK(rk4_step(constant, scalar(1.0), Array(0, 1), 0.0, 0.25)(0, 0) == 1.5);
  const VectorField bad = [](const Array& y, const Array&, double) { return Array(y / 0.0); };
  CHECK_THROWS_AS(rk4_step(bad, scalar(1.0), Array(0, 1), 0.0, 0.1), NumericalError);
}

TEST_CASE("rk4 is fourth order") {
  for (double dt : {0.2, 0.1, 0.05}) CHECK(logistic_error(dt) / logistic_error(dt / 2) >= 14.0);
}

TEST_CASE("rollout") {
  const GroundTruthSpec spec = fhn_system();
  const SemiExplicitSystem se(spec.system());
  const Vector v0 = differential_state(spec, Vector::Constant(1, 1.0), Vector::Constant(1, 0.5));
  const Vector x0 = se.join(v0, se.consistent_init(v0, Vector::Zero(4), spec.sources.at(0)));

  const Trajectory empty = rollout(se, x0, 0.0, 0, 0.01);
  CHECK(empty.times.size() == 1);
  CHECK(empty.states.col(0) == x0);

  const Trajectory a = rollout(se, x0, 0.0, 20000, 0.01);
  const Trajectory b = rollout(se, x0, 0.0, 20000, 0.01);
  CHECK(a.states == b.states);
  a.check();
  // Bounded oscillation of the membrane voltage.
  const Index e1 = se.system().layout().e_begin();
  const auto v = a.states.row(e1);
  CHECK(v.cwiseAbs().maxCoeff() < 3.0);
  CHECK(v.tail(5000).maxCoeff() - v.tail(5000).minCoeff() > 2.0);
  CHECK(a.inputs(0, 5) == 1.0);
  CHECK(a.inputs(1, 5) == -0.7);
}

TEST_CASE("inputs are held from the start of each step") {
  const VectorField f = [](const Array&, const Array& u, double) { return u; };
  const InputSignal in = [](double t) { return scalar(t < 0.5 ? 1.0 : -1.0); };
  const Trajectory tr = rollout(f, in, Vector::Zero(1), 0.0, 10, 0.1);
  CHECK(tr.states(0, 5) == doctest::Approx(0.5));
  CHECK(tr.states(0, 10) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("metrics") {
  const GroundTruthSpec spec = dgu_system();
  const SemiExplicitSystem se(spec.system());
  const Vector v0 = differential_state(spec, Vector::Constant(1, 0.4), Vector::Constant(1, 0.2));
  const Vector x0 = se.join(v0, se.consistent_init(v0, Vector::Zero(4), spec.sources.at(0)));
  const Trajectory truth = rollout(se, x0, 0.0, 200, 0.01);
  MetricsSeries m = metrics(truth, truth, constraint_of(se));
  for (double e : m.mse) CHECK(e == 0.0);
  for (double h : m.h_norm_sq) CHECK(h <= 1e-10);

  Trajectory shifted = truth;
  shifted.states.row(2).array() += 0.3;
  m = metrics(shifted, truth, constraint_of(se));
  for (double e : m.mse) CHECK(e == doctest::Approx(0.09 / 6.0));

  Trajectory shorter = truth;
  shorter.times.pop_back();
  CHECK_THROWS_AS(metrics(shorter, truth, constraint_of(se)), StructureError);
}

TEST_CASE("csv round trip") {
  Trajectory tr;
  tr.times = {0.0, 0.1, 0.2};
  tr.states = Matrix::Random(3, 3);
  tr.states(0, 0) = 1.0 / 3.0;
  tr.inputs = Matrix::Random(2, 3);
  const auto path = (std::filesystem::temp_directory_path() / "nphdae_traj.csv").string();
  write_trajectory_csv(path, tr);
  const Trajectory back = read_trajectory_csv(path);
  CHECK(back.states == tr.states);
  CHECK(back.inputs == tr.inputs);
  CHECK(back.times == tr.times);

  std::ostringstream os;
  write_trajectory_csv(os, tr);
  CHECK(os.str().rfind("t,x0,x1,x2,u0,u1\n", 0) == 0);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_trajectory_csv(path), IoError);

  MetricsSeries m{{0.0, 0.5}, {1e-3, 2e-3}, {0.0, 0.25}};
  std::ostringstream ms;
  write_metrics_csv(ms, m);
  CHECK(ms.str() == "t,mse,h_norm_sq\n0,0.001,0\n0.5,0.002,0.25\n");
  CHECK(format_double(0.1) == "0.1");
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}
