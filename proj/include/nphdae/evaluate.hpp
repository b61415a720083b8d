#pragma once

#include "nphdae/baseline.hpp"
#include "nphdae/dataset.hpp"
#include "nphdae/reduction.hpp"
#include "nphdae/simulate.hpp"

#include <json.hpp>

#include <functional>
#include <ostream>

namespace nphdae {

// Model rollout over a reference trajectory's grid. When integration fails the
// remaining states are NaN and `failed_step` records where it stopped.
struct ModelRollout {
  Trajectory traj;
  Index failed_step = -1;
  bool fallback_init = false;  // model consistent init failed; the reference algebraic state was used
};

using Predictor = std::function<ModelRollout(const Trajectory& reference, Index steps)>;

// Differential state from the reference, algebraic state from the model's own constraint.
Predictor phdae_predictor(const SemiExplicitSystem& model);
Predictor node_predictor(const BlackBoxOde& model);

struct EvalReport {
  std::vector<MetricsSeries> series;  // one per reference trajectory
  std::vector<Index> failed_steps;
  Index fallback_inits = 0;
  double dt = 0.0;

  // Median of ||h||^2 (or state MSE) pooled over trajectories and time; NaN counts as +inf.
  double median_h() const;
  double median_mse() const;
  // Mean over trajectories of the state MSE at time t.
  double mse_at(double t) const;
  nlohmann::json summary() const;
};

EvalReport evaluate(const Predictor& predict, const Dataset& reference, const SemiExplicitSystem& truth, Index steps);

// Long format: trajectory,t,mse,h_norm_sq
void write_eval_csv(std::ostream& os, const EvalReport& report);

}  // namespace nphdae
