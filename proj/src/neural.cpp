#include "nphdae/neural.hpp"

#include <fmt/format.h>

#include <cmath>

namespace nphdae {

std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }

Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  throw ConfigError(fmt::format("unknown activation '{}' (expected relu or tanh)", name));
}

Mlp::Mlp(std::vector<Index> widths, Activation act) : widths_(std::move(widths)), act_(act) {
  for (Index w : widths_)
    if (w < 0) throw ConfigError("negative layer width");
  if (widths_.size() == 1) throw ConfigError("an MLP needs at least an input and an output width");
  if (inputs() == 0 || outputs() == 0) return;
  for (std::size_t k = 1; k < widths_.size(); ++k) {
    if (widths_[k] == 0) throw ConfigError("zero hidden width");
    weights_.push_back(Matrix::Zero(widths_[k], widths_[k - 1]));
    biases_.push_back(Matrix::Zero(widths_[k], 1));
  }
}

Mlp Mlp::xavier(std::vector<Index> widths, Activation act, std::mt19937_64& rng) {
  Mlp m(std::move(widths), act);
  for (auto& w : m.weights_) {
    const double a = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    std::uniform_real_distribution<double> dist(-a, a);
    for (Index j = 0; j < w.cols(); ++j)
      for (Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
  }
  return m;
}

Index Mlp::param_count() const {
  Index n = 0;
  for (std::size_t k = 0; k < weights_.size(); ++k) n += weights_[k].size() + biases_[k].size();
  return n;
}

void Mlp::check_input(Index rows) const {
  if (rows != inputs())
    throw StructureError(fmt::format("MLP expects {} inputs, got {}", inputs(), rows));
}

void Mlp::pack(Eigen::Ref<Vector> out) const {
  if (out.size() != param_count()) throw StructureError("parameter vector size mismatch");
  Index at = 0;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    out.segment(at, weights_[k].size()) = weights_[k].reshaped();
    at += weights_[k].size();
    out.segment(at, biases_[k].size()) = biases_[k].reshaped();
    at += biases_[k].size();
  }
}

void Mlp::unpack(const Eigen::Ref<const Vector>& in) {
  if (in.size() != param_count()) throw StructureError("parameter vector size mismatch");
  Index at = 0;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    weights_[k].reshaped() = in.segment(at, weights_[k].size());
    at += weights_[k].size();
    biases_[k].reshaped() = in.segment(at, biases_[k].size());
    at += biases_[k].size();
  }
}

nlohmann::json Mlp::shape_json() const {
  nlohmann::json w = nlohmann::json::array();
  for (Index x : widths_) w.push_back(x);
  return {{"widths", w}, {"activation", to_string(act_)}};
}

Mlp Mlp::from_shape_json(const nlohmann::json& j) {
  try {
    return Mlp(j.at("widths").get<std::vector<Index>>(), parse_activation(j.at("activation").get<std::string>()));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("bad network description: {}", e.what()));
  }
}

BoundMlp bind(const Mlp& m, ad::Tape& tape) {
  BoundMlp b;
  for (std::size_t k = 0; k < m.weights().size(); ++k) {
    b.weights.push_back(tape.variable(m.weights()[k].array()));
    b.biases.push_back(tape.variable(m.biases()[k].array()));
  }
  return b;
}

void pack_gradient(const BoundMlp& b, const ad::Tape& tape, Eigen::Ref<Vector> out) {
  Index at = 0;
  for (std::size_t k = 0; k < b.weights.size(); ++k) {
    const Array gw = tape.grad(b.weights[k]);
    out.segment(at, gw.size()) = gw.reshaped();
    at += gw.size();
    const Array gb = tape.grad(b.biases[k]);
    out.segment(at, gb.size()) = gb.reshaped();
    at += gb.size();
  }
  if (at != out.size()) throw StructureError("gradient size mismatch");
}

const ParamRange& ParamVector::range(const std::string& name) const {
  for (const auto& r : layout)
    if (r.name == name) return r;
  throw ConfigError(fmt::format("no parameter block named '{}'", name));
}

NeuralRelations::NeuralRelations(Mlp g, Mlp q, Mlp h) : g_(std::move(g)), q_(std::move(q)), h_(std::move(h)) {
  if (g_.outputs() != g_.inputs()) throw StructureError("g network must map R^n_R to itself");
  if (q_.outputs() != q_.inputs()) throw StructureError("q network must map R^n_C to itself");
  if (h_.inputs() > 0 && h_.outputs() != 1) throw StructureError("H network must be scalar valued");
}

namespace {

std::vector<Index> widths_for(Index in, const std::vector<Index>& hidden, Index out) {
  if (in == 0) return {0, 0};
  std::vector<Index> w{in};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(out);
  return w;
}

}  // namespace

NeuralRelations NeuralRelations::init(Index n_r, Index n_c, Index n_l, const NeuralShape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Mlp g = Mlp::xavier(widths_for(n_r, shape.hidden, n_r), shape.activation, rng);
  Mlp q = Mlp::xavier(widths_for(n_c, shape.hidden, n_c), shape.activation, rng);
  Mlp h = Mlp::xavier(widths_for(n_l, shape.hidden, 1), shape.activation, rng);
  return NeuralRelations(std::move(g), std::move(q), std::move(h));
}

ParamVector NeuralRelations::params() const {
  ParamVector p;
  p.theta.resize(param_count());
  Index at = 0;
  const std::pair<const char*, const Mlp*> nets[] = {{"g", &g_}, {"q", &q_}, {"H", &h_}};
  for (const auto& [name, m] : nets) {
    const Index n = m->param_count();
    m->pack(p.theta.segment(at, n));
    p.layout.push_back({name, at, n});
    at += n;
  }
  return p;
}

NeuralRelations NeuralRelations::with_params(const Vector& theta) const {
  if (theta.size() != param_count())
    throw StructureError(fmt::format("expected {} parameters, got {}", param_count(), theta.size()));
  NeuralRelations out(g_, q_, h_);
  Index at = 0;
  for (Mlp* m : {&out.g_, &out.q_, &out.h_}) {
    const Index n = m->param_count();
    m->unpack(theta.segment(at, n));
    at += n;
  }
  return out;
}

NeuralRelations NeuralRelations::bind(ad::Tape& tape) const {
  NeuralRelations out(g_, q_, h_);
  auto b = std::make_shared<Bound>();
  b->tape = &tape;
  b->nets[0] = nphdae::bind(g_, tape);
  b->nets[1] = nphdae::bind(q_, tape);
  b->nets[2] = nphdae::bind(h_, tape);
  out.bound_ = std::move(b);
  return out;
}

Vector NeuralRelations::gradient() const {
  if (!bound_) throw StructureError("relations are not bound to a tape");
  Vector out(param_count());
  Index at = 0;
  const Mlp* nets[] = {&g_, &q_, &h_};
  for (int k = 0; k < 3; ++k) {
    const Index n = nets[k]->param_count();
    pack_gradient(bound_->nets[k], *bound_->tape, out.segment(at, n));
    at += n;
  }
  return out;
}

nlohmann::json NeuralRelations::to_json() const {
  const Vector theta = params().theta;
  return {{"kind", "nphdae"},
          {"networks", {{"g", g_.shape_json()}, {"q", q_.shape_json()}, {"H", h_.shape_json()}}},
          {"parameters", std::vector<double>(theta.data(), theta.data() + theta.size())}};
}

NeuralRelations NeuralRelations::from_json(const nlohmann::json& j) {
  try {
    if (j.at("kind").get<std::string>() != "nphdae") throw ConfigError("checkpoint is not an N-PHDAE model");
    const auto& nets = j.at("networks");
    NeuralRelations rel(Mlp::from_shape_json(nets.at("g")), Mlp::from_shape_json(nets.at("q")),
                        Mlp::from_shape_json(nets.at("H")));
    const auto theta = j.at("parameters").get<std::vector<double>>();
    return rel.with_params(Eigen::Map<const Vector>(theta.data(), static_cast<Index>(theta.size())));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("bad model checkpoint: {}", e.what()));
  }
}

}  // namespace nphdae
