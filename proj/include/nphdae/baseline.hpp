#pragma once

#include "nphdae/neural.hpp"
#include "nphdae/reduction.hpp"
#include "nphdae/train.hpp"

#include <optional>

namespace nphdae {

// Black-box neural ODE x' = f(x, u) over the full state.
class BlackBoxOde {
 public:
  BlackBoxOde(Index states, Index inputs, Mlp net);
  static BlackBoxOde init(Index states, Index inputs, const NeuralShape& shape, std::uint64_t seed);

  Index states() const { return n_; }
  Index inputs() const { return m_; }
  const Mlp& net() const { return net_; }
  Index param_count() const { return net_.param_count(); }
  Vector params() const;
  BlackBoxOde with_params(const Vector& theta) const;

  template <class W, class T>
  T field(const std::vector<W>& ws, const std::vector<W>& bs, const T& x, const Array& u) const {
    const Array ub = broadcast_inputs(u, ad::cols(x));
    return mlp_apply(ws, bs, net_.activation(), T(ad::vstack({x, ad::lift(x, ub)})));
  }
  Array field(const Array& x, const Array& u) const { return field(net_.weights(), net_.biases(), x, u); }

  nlohmann::json to_json() const;
  static BlackBoxOde from_json(const nlohmann::json& j);

 private:
  Index n_, m_;
  Mlp net_;
};

// One RK4 step of the black-box field with u held.
Array node_forward(const BlackBoxOde& model, const Array& x, const Array& u, double dt);

// mean_k ||y_k - RK4(x_k)||^2; the loss weights are ignored. Validation
// h_norm_sq is the true constraint on the one-step predictions when a reference
// system is given.
class NodeObjective final : public Objective {
 public:
  NodeObjective(BlackBoxOde model, std::optional<SemiExplicitSystem> reference = std::nullopt,
                ParallelOptions par = {});

  Index param_count() const override { return model_.param_count(); }
  BatchLoss evaluate(const Vector& theta, const SampleSet& batch, LossWeights w, bool with_gradient) const override;
  ValidationMetrics validate(const Vector& theta, const SampleSet& val) const override;

  const BlackBoxOde& model() const { return model_; }

 private:
  BlackBoxOde model_;
  std::optional<SemiExplicitSystem> reference_;
  ParallelOptions par_;
};

// Adam with cosine annealing on the plain MSE loss, same batching as fit.
TrainState node_fit(const NodeObjective& obj, TrainState state, const SampleSet& train, const SampleSet& val,
                    const TrainConfig& cfg, const CheckpointFn& on_checkpoint = {});

}  // namespace nphdae
