#include "nphdae/baseline.hpp"

#include "nphdae/simulate.hpp"

#include <fmt/format.h>

#include <cmath>

namespace nphdae {

BlackBoxOde::BlackBoxOde(Index states, Index inputs, Mlp net) : n_(states), m_(inputs), net_(std::move(net)) {
  if (net_.inputs() != n_ + m_ || net_.outputs() != n_)
    throw StructureError(fmt::format("black-box network must map R^{} to R^{}", n_ + m_, n_));
}

BlackBoxOde BlackBoxOde::init(Index states, Index inputs, const NeuralShape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Index> widths{states + inputs};
  widths.insert(widths.end(), shape.hidden.begin(), shape.hidden.end());
  widths.push_back(states);
  return BlackBoxOde(states, inputs, Mlp::xavier(widths, shape.activation, rng));
}

Vector BlackBoxOde::params() const {
  Vector theta(param_count());
  net_.pack(theta);
  return theta;
}

BlackBoxOde BlackBoxOde::with_params(const Vector& theta) const {
  BlackBoxOde out = *this;
  out.net_.unpack(theta);
  return out;
}

nlohmann::json BlackBoxOde::to_json() const {
  const Vector theta = params();
  return {{"kind", "node"},
          {"states", n_},
          {"inputs", m_},
          {"networks", {{"f", net_.shape_json()}}},
          {"parameters", std::vector<double>(theta.data(), theta.data() + theta.size())}};
}

BlackBoxOde BlackBoxOde::from_json(const nlohmann::json& j) {
  try {
    if (j.at("kind").get<std::string>() != "node") throw ConfigError("checkpoint is not a black-box model");
    BlackBoxOde m(j.at("states").get<Index>(), j.at("inputs").get<Index>(),
                  Mlp::from_shape_json(j.at("networks").at("f")));
    const auto theta = j.at("parameters").get<std::vector<double>>();
    if (static_cast<Index>(theta.size()) != m.param_count()) throw ConfigError("parameter count mismatch");
    return m.with_params(Eigen::Map<const Vector>(theta.data(), static_cast<Index>(theta.size())));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("bad model checkpoint: {}", e.what()));
  }
}

Array node_forward(const BlackBoxOde& model, const Array& x, const Array& u, double dt) {
  const Array next = rk4([&](const Array& y) { return model.field(y, u); }, x, dt);
  if (!next.allFinite()) throw NumericalError("non-finite black-box field");
  return next;
}

NodeObjective::NodeObjective(BlackBoxOde model, std::optional<SemiExplicitSystem> reference, ParallelOptions par)
    : model_(std::move(model)), reference_(std::move(reference)), par_(par) {
  if (reference_ && reference_->size() != model_.states())
    throw StructureError("reference system and black-box model differ in state size");
}

BatchLoss NodeObjective::evaluate(const Vector& theta, const SampleSet& batch, LossWeights, bool with_gradient) const {
  const BlackBoxOde m = model_.with_params(theta);
  return reduce_chunks(batch, par_, [&](const SampleSet& s) {
    ad::Tape tape;
    const BoundMlp b = bind(m.net(), tape);
    const ad::Tensor x = tape.constant(s.x);
    const auto field = [&](const ad::Tensor& y) { return m.field(b.weights, b.biases, y, s.u); };
    const ad::Tensor d = tape.constant(s.y) - rk4(field, x, s.dt);
    const ad::Tensor loss = ad::sum(d * d);
    BatchLoss out;
    out.samples = s.size();
    out.loss = loss.value()(0, 0);
    if (!std::isfinite(out.loss)) throw NumericalError("non-finite training loss");
    if (with_gradient) {
      tape.backward(loss);
      out.grad.resize(m.param_count());
      pack_gradient(b, tape, out.grad);
    }
    return out;
  });
}

ValidationMetrics NodeObjective::validate(const Vector& theta, const SampleSet& val) const {
  if (val.size() == 0) return {std::nan(""), std::nan("")};
  const Array pred = node_forward(model_.with_params(theta), val.x, val.u, val.dt);
  ValidationMetrics vm;
  vm.mse = (pred - val.y).square().mean();
  vm.h_norm_sq = reference_ ? reference_->h(pred, val.u).square().colwise().sum().mean() : std::nan("");
  return vm;
}

TrainState node_fit(const NodeObjective& obj, TrainState state, const SampleSet& train, const SampleSet& val,
                    const TrainConfig& cfg, const CheckpointFn& on_checkpoint) {
  return fit(obj, std::move(state), train, val, cfg, on_checkpoint);
}

}  // namespace nphdae
