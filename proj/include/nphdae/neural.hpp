#pragma once

#include "nphdae/assembly.hpp"

#include <json.hpp>

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace nphdae {

enum class Activation { relu, tanh };

std::string to_string(Activation a);
Activation parse_activation(const std::string& name);

template <class T>
T activate(Activation a, const T& x) {
  return a == Activation::tanh ? T(ad::tanh(x)) : T(ad::relu(x));
}

// Affine layers with `act` between them; the last layer is affine only.
// W is Matrix for plain weights or ad::Tensor for weights recorded on a tape.
template <class W, class T>
T mlp_apply(const std::vector<W>& ws, const std::vector<W>& bs, Activation act, const T& x) {
  T y = x;
  for (std::size_t k = 0; k < ws.size(); ++k) {
    y = ad::add_bias(T(ad::matmul(ws[k], y)), bs[k]);
    if (k + 1 < ws.size()) y = activate(act, y);
  }
  return y;
}

class Mlp {
 public:
  Mlp() = default;
  // Zero weights and biases.
  Mlp(std::vector<Index> widths, Activation act);
  // Weights ~ U(-a, a) with a = sqrt(6 / (fan_in + fan_out)), biases zero.
  static Mlp xavier(std::vector<Index> widths, Activation act, std::mt19937_64& rng);

  const std::vector<Index>& widths() const { return widths_; }
  Activation activation() const { return act_; }
  Index inputs() const { return widths_.empty() ? 0 : widths_.front(); }
  Index outputs() const { return widths_.empty() ? 0 : widths_.back(); }
  Index param_count() const;
  bool empty() const { return weights_.empty(); }

  std::vector<Matrix>& weights() { return weights_; }
  std::vector<Matrix>& biases() { return biases_; }
  const std::vector<Matrix>& weights() const { return weights_; }
  const std::vector<Matrix>& biases() const { return biases_; }

  template <class T>
  T forward(const T& x) const {
    check_input(ad::rows(x));
    if (empty()) return ad::block_rows(x, 0, 0);
    return mlp_apply(weights_, biases_, act_, x);
  }
  Vector operator()(const Vector& x) const { return forward(Array(x.array())).matrix(); }

  // Layer by layer: W (column-major) then b.
  void pack(Eigen::Ref<Vector> out) const;
  void unpack(const Eigen::Ref<const Vector>& in);

  void check_input(Index rows) const;

  nlohmann::json shape_json() const;
  static Mlp from_shape_json(const nlohmann::json& j);

 private:
  std::vector<Index> widths_;
  Activation act_ = Activation::relu;
  std::vector<Matrix> weights_, biases_;
};

// Weights of one network as tape variables.
struct BoundMlp {
  std::vector<ad::Tensor> weights, biases;
};

BoundMlp bind(const Mlp& m, ad::Tape& tape);
void pack_gradient(const BoundMlp& b, const ad::Tape& tape, Eigen::Ref<Vector> out);

struct ParamRange {
  std::string name;
  Index offset = 0;
  Index size = 0;
};

struct ParamVector {
  Vector theta;
  std::vector<ParamRange> layout;

  Index size() const { return theta.size(); }
  const ParamRange& range(const std::string& name) const;
};

struct NeuralShape {
  std::vector<Index> hidden{100, 100};
  Activation activation = Activation::relu;
};

// g: R^{n_R} -> R^{n_R}, q: R^{n_C} -> R^{n_C}, H: R^{n_L} -> R. The inductor
// currents are the forward-mode gradient of the scalar H network.
class NeuralRelations final : public RelationsBase<NeuralRelations> {
 public:
  NeuralRelations(Mlp g, Mlp q, Mlp h);
  static NeuralRelations init(Index n_r, Index n_c, Index n_l, const NeuralShape& shape, std::uint64_t seed);

  Index resistors() const override { return g_.inputs(); }
  Index capacitors() const override { return q_.inputs(); }
  Index inductors() const override { return h_.inputs(); }

  const Mlp& g_net() const { return g_; }
  const Mlp& q_net() const { return q_; }
  const Mlp& h_net() const { return h_; }

  ParamVector params() const;
  Index param_count() const { return g_.param_count() + q_.param_count() + h_.param_count(); }
  NeuralRelations with_params(const Vector& theta) const;

  // Copy whose tape evaluations depend on fresh variables holding the current
  // parameters. gradient() packs their adjoints after a backward pass.
  NeuralRelations bind(ad::Tape& tape) const;
  bool bound() const { return bound_ != nullptr; }
  Vector gradient() const;

  template <class T>
  T g_t(const T& v) const {
    return apply(g_, 0, v);
  }
  template <class T>
  T q_t(const T& c) const {
    return apply(q_, 1, c);
  }
  template <class T>
  T hamiltonian(const T& phi) const {
    return apply(h_, 2, phi);
  }

  // Row k of the gradient is the tangent of H along the k-th unit direction.
  template <class T>
  T grad_h_t(const T& phi) const {
    h_.check_input(ad::rows(phi));
    const Index n = ad::rows(phi), batch = ad::cols(phi);
    if (n == 0 || h_.empty()) return ad::lift(phi, Array::Zero(n, batch));
    std::vector<T> parts;
    parts.reserve(static_cast<std::size_t>(n));
    for (Index k = 0; k < n; ++k) {
      Array unit = Array::Zero(n, batch);
      unit.row(k).setOnes();
      const ad::Dual<T> x(phi, ad::lift(phi, std::move(unit)));
      const ad::Dual<T> y = hamiltonian(x);
      parts.push_back(ad::tangent_or_zero(y));
    }
    if (parts.size() == 1) return parts.front();
    return ad::vstack(std::span<const T>(parts));
  }

  nlohmann::json to_json() const;
  static NeuralRelations from_json(const nlohmann::json& j);

 private:
  struct Bound {
    ad::Tape* tape = nullptr;
    BoundMlp nets[3];
  };

  template <class T>
  T apply(const Mlp& m, int which, const T& x) const {
    if constexpr (ad::on_tape_v<T>) {
      if (bound_ && !m.empty()) {
        m.check_input(ad::rows(x));
        return mlp_apply(bound_->nets[which].weights, bound_->nets[which].biases, m.activation(), x);
      }
    }
    return m.forward(x);
  }

  Mlp g_, q_, h_;
  std::shared_ptr<const Bound> bound_;
};

}  // namespace nphdae
