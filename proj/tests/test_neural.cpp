#include "nphdae/neural.hpp"
#include "nphdae/reduction.hpp"
#include "nphdae/systems.hpp"

#include <doctest.h>

#include <cmath>

using namespace nphdae;

namespace {

double max_rel(const Vector& a, const Vector& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1e-3, b.cwiseAbs().maxCoeff());
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

}  // namespace

TEST_CASE("mlp forward") {
  const Mlp zero({3, 4, 2}, Activation::tanh);
  CHECK(zero.param_count() == 3 * 4 + 4 + 4 * 2 + 2);
  CHECK(zero(Vector::Random(3)).isZero(0.0));

  Mlp id({1, 1, 1}, Activation::relu);
  id.weights()[0](0, 0) = 1.0;
  id.weights()[1](0, 0) = 1.0;
  CHECK(id(Vector::Constant(1, -2.0))(0) == 0.0);
  CHECK(id(Vector::Constant(1, 2.0))(0) == 2.0);
  CHECK(id(Vector::Constant(1, 0.0))(0) == 0.0);

  CHECK_THROWS_AS(zero(Vector::Zero(2)), StructureError);
  CHECK_THROWS_AS(Mlp({3}, Activation::relu), ConfigError);
  CHECK_THROWS_AS(parse_activation("sigmoid"), ConfigError);

  std::mt19937_64 rng(1);
  const Mlp big = Mlp::xavier({2, 100, 100, 2}, Activation::relu, rng);
  CHECK(big.param_count() == 2 * 100 + 100 + 100 * 100 + 100 + 100 * 2 + 2);
}

TEST_CASE("xavier init") {
  std::mt19937_64 a(5), b(5), c(6);
  const Mlp ma = Mlp::xavier({4, 8, 3}, Activation::tanh, a);
  const Mlp mb = Mlp::xavier({4, 8, 3}, Activation::tanh, b);
  const Mlp mc = Mlp::xavier({4, 8, 3}, Activation::tanh, c);
  Vector pa(ma.param_count()), pb(pa.size()), pc(pa.size());
  ma.pack(pa);
  mb.pack(pb);
  mc.pack(pc);
  CHECK(pa == pb);
  CHECK(pa != pc);
  CHECK(ma.biases()[0].isZero(0.0));
  const double bound = std::sqrt(6.0 / 12.0);
  CHECK(ma.weights()[0].cwiseAbs().maxCoeff() <= bound);

  std::mt19937_64 r(9);
  const Mlp wide = Mlp::xavier({317, 317}, Activation::relu, r);
  const Matrix& w = wide.weights()[0];
  const double n = static_cast<double>(w.size());
  CHECK(n >= 1e5);
  const double sigma = std::sqrt(6.0 / 634.0) / std::sqrt(3.0);
  CHECK(std::abs(w.mean()) <= 3 * sigma / std::sqrt(n));
}

TEST_CASE("parameter vector round trip") {
  const NeuralRelations rel = NeuralRelations::init(2, 1, 1, {{16, 16}, Activation::tanh}, 3);
  const ParamVector p = rel.params();
  CHECK(p.size() == rel.param_count());
  CHECK(p.layout.size() == 3);
  CHECK(p.range("g").offset == 0);
  CHECK(p.range("q").offset == p.range("g").size);
  CHECK(p.range("H").offset + p.range("H").size == p.size());
  CHECK(p.range("H").size == 16 + 16 + 16 * 16 + 16 + 16 + 1);
  CHECK(rel.with_params(p.theta).params().theta == p.theta);
  CHECK_THROWS_AS(rel.with_params(Vector::Zero(3)), StructureError);

  const NeuralRelations back = NeuralRelations::from_json(nlohmann::json::parse(rel.to_json().dump()));
  CHECK(back.params().theta == p.theta);
  CHECK(back.g_net().activation() == Activation::tanh);
}

TEST_CASE("grad H") {
  // H(x) = w2 tanh(w1 x) has dH/dx = w2 w1 (1 - tanh^2(w1 x)).
  Mlp h({1, 1, 1}, Activation::tanh);
  h.weights()[0](0, 0) = 0.7;
  h.weights()[1](0, 0) = -1.3;
  const NeuralRelations rel(Mlp({0, 0}, Activation::tanh), Mlp({0, 0}, Activation::tanh), h);
  Array phi(1, 3);
  phi << -1.0, 0.2, 2.5;
  const Array g = rel.grad_h(phi);
  for (Index k = 0; k < 3; ++k) {
    const double t = std::tanh(0.7 * phi(0, k));
    CHECK(g(0, k) == doctest::Approx(-1.3 * 0.7 * (1 - t * t)).epsilon(1e-14));
  }

  // Piecewise linear relu path: H = 2 relu(x) + 3 relu(-x).
  Mlp pl({1, 2, 1}, Activation::relu);
  pl.weights()[0] << 1.0, -1.0;
  pl.weights()[1] << 2.0, 3.0;
  const NeuralRelations rpl(Mlp({0, 0}, Activation::relu), Mlp({0, 0}, Activation::relu), pl);
  Array x(1, 2);
  x << 1.5, -0.5;
  const Array gp = rpl.grad_h(x);
  CHECK(gp(0, 0) == 2.0);
  CHECK(gp(0, 1) == -3.0);

  const NeuralRelations zero(Mlp({0, 0}, Activation::relu), Mlp({0, 0}, Activation::relu),
                             Mlp({2, 5, 1}, Activation::tanh));
  CHECK(zero.grad_h(Array(Array::Random(2, 4))).isZero(0.0));

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const NeuralRelations r = NeuralRelations::init(1, 1, 3, {{12, 12}, Activation::tanh}, seed);
    const Vector p = Vector::Random(3);
    const Vector ad = r.grad_h(Array(p.array())).matrix();
    const Vector fd =
        central_difference([&](const Vector& y) { return r.hamiltonian(Array(y.array()))(0, 0); }, p);
    CHECK(max_rel(ad, fd) <= 1e-5);
  }
}

TEST_CASE("tape evaluation matches plain evaluation") {
  const NeuralRelations rel = NeuralRelations::init(2, 1, 1, {{8, 8}, Activation::tanh}, 11);
  ad::Tape tape;
  const NeuralRelations bound = rel.bind(tape);
  const Array v = Array::Random(2, 5);
  const Array phi = Array::Random(1, 5);
  CHECK(bound.g(tape.constant(v)).value().isApprox(rel.g(v), 0.0));
  CHECK((bound.g(tape.constant(v)).value() == rel.g(v)).all());
  CHECK((bound.grad_h(tape.constant(phi)).value() == rel.grad_h(phi)).all());
  CHECK((rel.q(tape.constant(phi)).value() == rel.q(phi)).all());
}

TEST_CASE("parameter gradients of every network match finite differences") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const NeuralRelations rel = NeuralRelations::init(2, 1, 2, {{6, 5}, Activation::tanh}, seed);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n01;
    Array v(2, 3), c(1, 3), p(2, 3);
    for (Array* a : {&v, &c, &p})
      for (Index i = 0; i < a->size(); ++i) (*a)(i) = n01(rng);

    auto loss_of = [&](const NeuralRelations& r, auto&& lift) {
      auto gv = r.g(lift(v));
      auto qc = r.q(lift(c));
      auto gh = r.grad_h(lift(p));
      return ad::sum(gv * gv) + ad::sum(qc * qc * qc) + ad::sum(gh * gh) * 0.5;
    };
    ad::Tape tape;
    const NeuralRelations bound = rel.bind(tape);
    const ad::Tensor loss = loss_of(bound, [&](const Array& a) { return tape.constant(a); });
    tape.backward(loss);
    const Vector grad = bound.gradient();
    const Vector fd = central_difference(
        [&](const Vector& th) { return loss_of(rel.with_params(th), [](const Array& a) { return a; })(0, 0); },
        rel.params().theta);
    CHECK(max_rel(grad, fd) <= 1e-4);
  }
}

TEST_CASE("neural relations in an assembled system are differentiable in the parameters") {
  const GroundTruthSpec spec = fhn_system();
  const PhdaeSystem truth = spec.system();
  const auto& lay = truth.layout();
  const NeuralRelations rel = NeuralRelations::init(truth.relations().resistors(), lay.n_c, lay.n_l,
                                                    {{10, 10}, Activation::tanh}, 4);
  const SemiExplicitSystem se(truth.with_relations(std::make_shared<NeuralRelations>(rel)));
  const Array x = Array::Random(lay.size(), 4);
  const Array u = truth.inputs_at(0.0, 1);

  auto loss_of = [&](const NeuralRelations& r, auto&& x_in) {
    auto hv = se.h(r, x_in, u);
    auto f = se.f(r, x_in, u);
    return ad::sum(hv * hv) + ad::sum(f * f);
  };
  ad::Tape tape;
  const NeuralRelations bound = rel.bind(tape);
  tape.backward(loss_of(bound, tape.constant(x)));
  const Vector fd = central_difference(
      [&](const Vector& th) { return loss_of(rel.with_params(th), x)(0, 0); }, rel.params().theta);
  CHECK(max_rel(bound.gradient(), fd) <= 1e-4);
}
