#include "nphdae/systems.hpp"
#include "nphdae/train.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace nphdae;

namespace {

// Single node with a capacitor, a resistor and a current source to ground.
GroundTruthSpec rc_spec(double r, double c) {
  CircuitGraph g(2, 0,
                 {{0, ComponentKind::Capacitor, 1, 0},
                  {0, ComponentKind::Resistor, 1, 0},
                  {0, ComponentKind::CurrentSource, 0, 1}});
  auto rel = std::make_shared<LinearRelations>(Vector::Constant(1, r), Vector::Constant(1, c), Vector(0));
  GroundTruthSpec spec("rc", g, rel, SourceSignal(Vector::Constant(1, 0.3)));
  spec.capacitance = Vector::Constant(1, c);
  spec.inductance = Vector(0);
  return spec;
}

// x -> x / k exactly, through a relu pair.
Mlp linear_net(double k) {
  Mlp m({1, 2, 1}, Activation::relu);
  m.weights()[0] << 1.0, -1.0;
  m.weights()[1] << 1.0 / k, -1.0 / k;
  return m;
}

Vector central_difference(const std::function<double(const Vector&)>& f, const Vector& x, double step = 1e-5) {
  Vector g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    Vector a = x, b = x;
    a(i) += step;
    b(i) -= step;
    g(i) = (f(a) - f(b)) / (2 * step);
  }
  return g;
}

SampleSet fhn_samples(Index trajectories, Index steps, std::uint64_t seed) {
  GroundTruthSpec spec = fhn_system();
  GenerateOptions opt;
  opt.trajectories = trajectories;
  opt.steps = steps;
  opt.seed = seed;
  return generate_dataset(spec, opt).samples();
}

}  // namespace

TEST_CASE("adam") {
  Vector theta = Vector::Zero(3);
  AdamState st(3);
  CHECK(adam_step(st, theta, Vector::Ones(3), 1e-3));
  for (Index i = 0; i < 3; ++i) CHECK(theta(i) == doctest::Approx(-1e-3 / (1.0 + 1e-8)).epsilon(1e-14));
  CHECK(st.step == 1);

  Vector same = theta;
  AdamState z(3);
  CHECK(adam_step(z, same, Vector::Zero(3), 1e-3));
  CHECK(same == theta);

  // Unrolled two steps with g1 = 1, g2 = 3.
  Vector t2 = Vector::Zero(1);
  AdamState s2(1);
  adam_step(s2, t2, Vector::Constant(1, 1.0), 0.1);
  const double after1 = t2(0);
  adam_step(s2, t2, Vector::Constant(1, 3.0), 0.1);
  const double m = 0.9 * 0.1 + 0.1 * 3.0, s = 0.999 * 0.001 + 0.001 * 9.0;
  const double upd = 0.1 * (m / (1 - 0.81)) / (std::sqrt(s / (1 - 0.999 * 0.999)) + 1e-8);
  CHECK(t2(0) == doctest::Approx(after1 - upd).epsilon(1e-12));

  // With a constant gradient the bias-corrected step does not grow.
  Vector t3 = Vector::Zero(1);
  AdamState s3(1);
  adam_step(s3, t3, Vector::Ones(1), 0.1);
  const double first = -t3(0);
  adam_step(s3, t3, Vector::Ones(1), 0.1);
  CHECK(-t3(0) - first <= first * (1 + 1e-12));

  Vector t4 = Vector::Zero(2);
  AdamState s4(2);
  Vector bad(2);
  bad << 1.0, std::nan("");
  CHECK_FALSE(adam_step(s4, t4, bad, 0.1));
  CHECK(t4.isZero(0.0));
  CHECK(s4.step == 0);
}

TEST_CASE("cosine learning rate") {
  CHECK(cosine_lr(0, 100, 0.5) == 0.5);
  CHECK(cosine_lr(100, 100, 0.5) == doctest::Approx(0.0));
  CHECK(cosine_lr(50, 100, 0.5) == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("loss on an exactly representable model") {
  const GroundTruthSpec spec = rc_spec(1.5, 2.0);
  const SemiExplicitSystem truth(spec.system());
  GenerateOptions opt;
  opt.trajectories = 2;
  opt.steps = 20;
  opt.dt = 0.05;
  const SampleSet s = generate_dataset(spec, opt).samples();

  const NeuralRelations perfect(linear_net(1.5), linear_net(2.0), Mlp({0, 0}, Activation::relu));
  const PhdaeObjective obj(truth, perfect);
  const Vector theta = perfect.params().theta;
  const BatchLoss l = obj.evaluate(theta, s, {1.0, 1.0}, true);
  CHECK(l.loss <= 1e-24);
  CHECK(l.singular == 0);
  CHECK(l.samples == s.size());

  // A mismatched resistor: the tape loss agrees with an independent plain evaluation.
  const NeuralRelations off(linear_net(0.5), linear_net(3.0), Mlp({0, 0}, Activation::relu));
  const SampleSet one = s.select({3});
  const double alpha = 0.7, beta = 0.4;
  const Array pred = rk4([&](const Array& x) { return truth.field(off, x, one.u); }, one.x, one.dt);
  const Array hv = truth.h(off, one.x, one.u);
  const double expected = alpha * (one.y - pred).square().sum() + beta * hv.square().sum();
  const PhdaeObjective obj_off(truth, off);
  CHECK(obj_off.evaluate(off.params().theta, one, {alpha, beta}, false).loss ==
        doctest::Approx(expected).epsilon(1e-12));
  CHECK(expected > 1e-8);

  // alpha = 0 ignores the integrator.
  SampleSet other_dt = one;
  other_dt.dt = 0.5;
  other_dt.y.setZero();
  CHECK(obj_off.evaluate(off.params().theta, one, {0.0, 1.0}, false).loss ==
        obj_off.evaluate(off.params().theta, other_dt, {0.0, 1.0}, false).loss);
}

TEST_CASE("loss gradient matches finite differences") {
  const GroundTruthSpec spec = fhn_system();
  const SemiExplicitSystem truth(spec.system());
  const SampleSet all = fhn_samples(1, 30, 2);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const NeuralRelations rel = NeuralRelations::init(2, 1, 1, {{8, 8}, Activation::tanh}, seed);
    const PhdaeObjective obj(truth, rel);
    const SampleSet one = all.select({static_cast<Index>(seed * 5)});
    const Vector theta = rel.params().theta;
    const LossWeights w{1.0, 0.01};
    const BatchLoss l = obj.evaluate(theta, one, w, true);
    REQUIRE(l.singular == 0);
    const Vector fd = central_difference([&](const Vector& t) { return obj.evaluate(t, one, w, false).loss; }, theta);
    const double err = (l.grad - fd).cwiseAbs().maxCoeff() / std::max(1e-3, fd.cwiseAbs().maxCoeff());
    CHECK(err <= 1e-4);
  }
}

TEST_CASE("singular samples fall back to the penalty") {
  const GroundTruthSpec spec = fhn_system();
  const SemiExplicitSystem truth(spec.system());
  // With g = 0 the KCL rows of the two inner nodes only see j_V.
  const NeuralRelations zero(Mlp({2, 4, 2}, Activation::tanh), Mlp({1, 4, 1}, Activation::tanh),
                             Mlp({1, 4, 1}, Activation::tanh));
  const PhdaeObjective obj(truth, zero);
  const SampleSet s = fhn_samples(1, 10, 1);
  const Vector theta = zero.params().theta;
  const BatchLoss both = obj.evaluate(theta, s, {1.0, 1.0}, true);
  const BatchLoss pen = obj.evaluate(theta, s, {0.0, 1.0}, true);
  CHECK(both.singular == s.size());
  CHECK(both.loss == doctest::Approx(pen.loss).epsilon(1e-14));
  CHECK(both.grad.isApprox(pen.grad, 1e-14));

  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.switch_epoch = 0;
  cfg.log_every = 1;
  CHECK_THROWS_AS(fit(obj, TrainState{0, theta, AdamState(theta.size())}, s, s, cfg), TrainingCollapse);
}

TEST_CASE("epoch batches") {
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.seed = 3;
  const auto full = epoch_batches(10, cfg, 0);
  CHECK(full.size() == 3);
  CHECK(full.back().size() == 2);
  std::vector<Index> seen;
  for (const auto& b : full) seen.insert(seen.end(), b.begin(), b.end());
  std::sort(seen.begin(), seen.end());
  for (Index i = 0; i < 10; ++i) CHECK(seen[static_cast<std::size_t>(i)] == i);
  CHECK(epoch_batches(10, cfg, 0) == full);
  CHECK(epoch_batches(10, cfg, 1) != full);

  cfg.batches_per_epoch = 5;
  const auto fixed = epoch_batches(10, cfg, 2);
  CHECK(fixed.size() == 5);
  for (const auto& b : fixed) CHECK(b.size() == 4);
  cfg.batch_size = 128;
  CHECK(epoch_batches(10, cfg, 2).front().size() == 10);
}

TEST_CASE("fit is deterministic and resumable") {
  const GroundTruthSpec spec = fhn_system();
  const SemiExplicitSystem truth(spec.system());
  const SampleSet train = fhn_samples(2, 40, 5);
  const SampleSet val = fhn_samples(1, 40, 6);
  const NeuralRelations rel = NeuralRelations::init(2, 1, 1, {{8, 8}, Activation::tanh}, 1);
  TrainConfig cfg;
  cfg.epochs = 8;
  cfg.switch_epoch = 3;
  cfg.batch_size = 16;
  cfg.batches_per_epoch = 2;
  cfg.lr = 1e-3;
  cfg.log_every = 2;
  cfg.checkpoint_every = 4;
  const Vector theta0 = rel.params().theta;
  const PhdaeObjective obj(truth, rel);

  TrainConfig zero_cfg = cfg;
  zero_cfg.epochs = 0;
  zero_cfg.switch_epoch = 0;
  const TrainState none = fit(obj, TrainState{0, theta0, AdamState(theta0.size())}, train, val, zero_cfg);
  CHECK(none.theta == theta0);
  CHECK(none.history.empty());

  std::vector<std::string> checkpoints;
  const TrainState a = fit(obj, TrainState{0, theta0, AdamState(theta0.size())}, train, val, cfg,
                           [&](const TrainState& st) { checkpoints.push_back(st.to_json().dump()); });
  const TrainState b = fit(obj, TrainState{0, theta0, AdamState(theta0.size())}, train, val, cfg);
  CHECK(a.theta == b.theta);
  CHECK(a.theta != theta0);
  REQUIRE(a.history.size() == 4);
  CHECK(a.history[1].epoch == 3);
  for (std::size_t k = 0; k < a.history.size(); ++k) CHECK(a.history[k].loss == b.history[k].loss);
  REQUIRE(checkpoints.size() == 2);

  const TrainState mid = TrainState::from_json(nlohmann::json::parse(checkpoints.front()));
  CHECK(mid.epoch == 4);
  const TrainState resumed = fit(obj, mid, train, val, cfg);
  CHECK(resumed.theta == a.theta);
  CHECK(resumed.adam.m == a.adam.m);
  CHECK(resumed.history.size() == a.history.size());
  CHECK(resumed.history.back().val_hnorm == a.history.back().val_hnorm);

  // Chunked and threaded evaluation reduce in a fixed order.
  const PhdaeObjective chunked1(truth, rel, {4, 1});
  const PhdaeObjective chunked3(truth, rel, {4, 3});
  const BatchLoss l1 = chunked1.evaluate(theta0, train.select({0, 1, 2, 3, 4, 5, 6, 7, 8, 9}), {1.0, 0.01}, true);
  const BatchLoss l3 = chunked3.evaluate(theta0, train.select({0, 1, 2, 3, 4, 5, 6, 7, 8, 9}), {1.0, 0.01}, true);
  CHECK(l1.loss == l3.loss);
  CHECK(l1.grad == l3.grad);
  const BatchLoss whole = obj.evaluate(theta0, train.select({0, 1, 2, 3, 4, 5, 6, 7, 8, 9}), {1.0, 0.01}, true);
  CHECK(whole.loss == doctest::Approx(l1.loss).epsilon(1e-13));

  std::ostringstream os;
  write_history_csv(os, a.history);
  CHECK(os.str().rfind("epoch,loss,lr,val_mse,val_hnorm,singular_events\n", 0) == 0);
}

TEST_CASE("training config") {
  const TrainConfig def;
  CHECK(def.lr == 1e-4);
  CHECK(def.batch_size == 128);
  CHECK(def.phase1.alpha == 0.0);
  CHECK(def.phase2.beta == 0.01);
  const TrainConfig back = TrainConfig::from_json(def.to_json());
  CHECK(back.to_json() == def.to_json());
  const TrainConfig c = TrainConfig::from_json({{"epochs", 10}, {"switch_epoch", 4}, {"activation", "tanh"}});
  CHECK(c.epochs == 10);
  CHECK(c.shape.activation == Activation::tanh);
  CHECK_THROWS_AS(TrainConfig::from_json({{"epoch", 10}}), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_json({{"epochs", 10}, {"switch_epoch", 11}}), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_json({{"batch_size", 0}}), ConfigError);
}
