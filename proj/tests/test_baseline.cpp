#include "nphdae/baseline.hpp"
#include "nphdae/systems.hpp"

#include <doctest.h>

#include <cmath>

using namespace nphdae;

namespace {

// f(x, u) = -x for x in R^n through relu pairs; inputs are ignored.
BlackBoxOde decay(Index n, Index m) {
  Mlp net({n + m, 2 * n, n}, Activation::relu);
  net.weights()[0].setZero();
  net.weights()[0].topLeftCorner(n, n).setIdentity();
  net.weights()[0].bottomLeftCorner(n, n) = -Matrix::Identity(n, n);
  net.weights()[1] << -Matrix::Identity(n, n), Matrix::Identity(n, n);
  return BlackBoxOde(n, m, net);
}

SampleSet teacher_samples(Index trajectories, Index steps, double dt, std::uint64_t seed) {
  Matrix a(2, 2);
  a << -0.1, 1.0, -1.0, -0.1;
  const VectorField f = [&](const Array& x, const Array&, double) { return Array((a * x.matrix()).array()); };
  const InputSignal u = [](double) { return Array(0, 1); };
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> init(-1.0, 1.0);
  Dataset ds;
  for (Index k = 0; k < trajectories; ++k) {
    Vector x0(2);
    x0 << init(rng), init(rng);
    ds.trajectories.push_back(rollout(f, u, x0, 0.0, steps, dt));
  }
  return ds.samples();
}

}  // namespace

TEST_CASE("node forward") {
  const BlackBoxOde zero(3, 1, Mlp({4, 5, 3}, Activation::tanh));
  const Array x = Array::Random(3, 2);
  CHECK((node_forward(zero, x, Array::Ones(1, 1), 0.1) == x).all());

  const BlackBoxOde d = decay(2, 1);
  Array y = Array::Constant(2, 1, 0.8);
  y(1, 0) = -0.5;
  const Array y0 = y;
  for (int k = 0; k < 100; ++k) y = node_forward(d, y, Array::Ones(1, 1), 0.01);
  CHECK((y - y0 * std::exp(-1.0)).abs().maxCoeff() <= 1e-8);

  const BlackBoxOde def = BlackBoxOde::init(6, 2, NeuralShape{}, 0);
  CHECK(def.net().widths() == std::vector<Index>{8, 100, 100, 6});
  CHECK_THROWS_AS(BlackBoxOde(3, 1, Mlp({3, 5, 3}, Activation::tanh)), StructureError);

  const BlackBoxOde back = BlackBoxOde::from_json(nlohmann::json::parse(def.to_json().dump()));
  CHECK(back.params() == def.params());
}

TEST_CASE("node rollout shares the integrator") {
  const BlackBoxOde d = decay(2, 1);
  const VectorField f = [&](const Array& x, const Array& u, double) { return d.field(x, u); };
  const InputSignal u = [](double) { return Array(Array::Ones(1, 1)); };
  Vector x0(2);
  x0 << 0.3, -0.2;
  const Trajectory tr = rollout(f, u, x0, 0.0, 5, 0.1);
  Array x = x0.array();
  for (int k = 0; k < 5; ++k) x = node_forward(d, x, Array::Ones(1, 1), 0.1);
  CHECK((tr.states.col(5).array() == x.col(0)).all());
}

TEST_CASE("node loss gradient") {
  const SampleSet s = teacher_samples(1, 10, 0.1, 1);
  const BlackBoxOde m = BlackBoxOde::init(2, 0, {{6, 6}, Activation::tanh}, 2);
  const NodeObjective obj(m);
  const SampleSet one = s.select({4});
  const BatchLoss l = obj.evaluate(m.params(), one, {}, true);
  const Vector theta = m.params();
  Vector fd(theta.size());
  for (Index i = 0; i < theta.size(); ++i) {
    Vector a = theta, b = theta;
    a(i) += 1e-5;
    b(i) -= 1e-5;
    fd(i) = (obj.evaluate(a, one, {}, false).loss - obj.evaluate(b, one, {}, false).loss) / 2e-5;
  }
  CHECK((l.grad - fd).cwiseAbs().maxCoeff() / std::max(1e-3, fd.cwiseAbs().maxCoeff()) <= 1e-4);
}

TEST_CASE("node fit") {
  const SampleSet train = teacher_samples(8, 100, 0.1, 3);
  const SampleSet val = teacher_samples(2, 100, 0.1, 4);
  const BlackBoxOde m = BlackBoxOde::init(2, 0, {{16, 16}, Activation::tanh}, 5);
  const NodeObjective obj(m);
  TrainConfig cfg;
  cfg.lr = 1e-2;
  cfg.epochs = 0;
  cfg.switch_epoch = 0;
  const TrainState init{0, m.params(), AdamState(m.param_count())};
  CHECK(node_fit(obj, init, train, val, cfg).theta == m.params());

  cfg.epochs = 3000;
  cfg.batches_per_epoch = 1;
  cfg.log_every = 3000;
  const TrainState a = node_fit(obj, init, train, val, cfg);
  CHECK(a.history.back().val_mse <= 1e-6);
  cfg.epochs = 50;
  cfg.log_every = 50;
  CHECK(node_fit(obj, init, train, val, cfg).theta == node_fit(obj, init, train, val, cfg).theta);
}

TEST_CASE("validation reports the true constraint") {
  const GroundTruthSpec spec = fhn_system();
  const SemiExplicitSystem truth(spec.system());
  GenerateOptions opt;
  opt.trajectories = 1;
  opt.steps = 5;
  const SampleSet s = generate_dataset(spec, opt).samples();
  const BlackBoxOde zero(6, 2, Mlp({8, 4, 6}, Activation::tanh));
  const NodeObjective obj(zero, truth);
  // The zero field predicts x itself, which satisfies h.
  const ValidationMetrics vm = obj.validate(zero.params(), s);
  CHECK(vm.h_norm_sq <= 1e-16);
  CHECK(vm.mse > 0.0);
}
