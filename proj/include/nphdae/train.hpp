#pragma once

#include "nphdae/dataset.hpp"
#include "nphdae/neural.hpp"
#include "nphdae/reduction.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace nphdae {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Vector m, s;
  std::int64_t step = 0;

  AdamState() = default;
  explicit AdamState(Index n) : m(Vector::Zero(n)), s(Vector::Zero(n)) {}
};

// Bias-corrected Adam. A non-finite gradient leaves state and theta untouched
// and returns false.
bool adam_step(AdamState& state, Vector& theta, const Vector& grad, double lr, const AdamConfig& cfg = {});

double cosine_lr(double epoch, double total, double lr0);

struct LossWeights {
  double alpha = 1.0;  // state MSE through the integrator
  double beta = 0.0;   // algebraic penalty
};

struct BatchLoss {
  double loss = 0.0;
  Vector grad;
  Index singular = 0;
  Index samples = 0;
};

struct ValidationMetrics {
  double mse = 0.0;        // one-step state MSE
  double h_norm_sq = 0.0;  // mean squared constraint norm
};

// A parametric one-step predictor with a batch loss.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual Index param_count() const = 0;
  virtual BatchLoss evaluate(const Vector& theta, const SampleSet& batch, LossWeights w, bool with_gradient) const = 0;
  virtual ValidationMetrics validate(const Vector& theta, const SampleSet& val) const = 0;
};

// Batches are cut into chunks of `chunk` columns (0 = whole batch), each with its
// own tape; chunk results are reduced in order so the result does not depend on
// the thread count.
struct ParallelOptions {
  Index chunk = 0;
  int threads = 1;
};

// mean_k alpha ||y_k - RK4(x_k)||^2 + beta ||h_theta(x_k)||^2. Samples whose
// dh/dw is singular at any RK4 stage keep only the penalty term.
class PhdaeObjective final : public Objective {
 public:
  PhdaeObjective(SemiExplicitSystem se, NeuralRelations model, ParallelOptions par = {});

  Index param_count() const override { return model_.param_count(); }
  BatchLoss evaluate(const Vector& theta, const SampleSet& batch, LossWeights w, bool with_gradient) const override;
  // h_norm_sq is the model's own constraint ||h_theta||^2 on the validation states.
  ValidationMetrics validate(const Vector& theta, const SampleSet& val) const override;

  const SemiExplicitSystem& system() const { return se_; }
  const NeuralRelations& model() const { return model_; }

 private:
  BatchLoss chunk_loss(const NeuralRelations& rel, const SampleSet& s, LossWeights w, bool with_gradient) const;

  SemiExplicitSystem se_;
  NeuralRelations model_;
  ParallelOptions par_;
};

// Evaluates fn(chunk) for each column range in parallel and sums the results in order.
BatchLoss reduce_chunks(const SampleSet& batch, const ParallelOptions& par,
                        const std::function<BatchLoss(const SampleSet&)>& fn);

struct TrainConfig {
  int epochs = 100000;
  int switch_epoch = 25000;
  Index batch_size = 128;
  // Minibatches drawn per epoch; 0 means one full pass over the training samples.
  int batches_per_epoch = 0;
  double lr = 1e-4;
  LossWeights phase1{0.0, 1.0};
  LossWeights phase2{1.0, 0.01};
  AdamConfig adam;
  std::uint64_t seed = 0;
  NeuralShape shape;
  int log_every = 100;
  int checkpoint_every = 0;
  Index validation_samples = 512;
  double max_singular_fraction = 0.1;
  ParallelOptions parallel;

  void validate() const;
  LossWeights weights_at(int epoch) const { return epoch < switch_epoch ? phase1 : phase2; }

  nlohmann::json to_json() const;
  // Unknown keys are rejected; missing keys keep their defaults.
  static TrainConfig from_json(const nlohmann::json& j, TrainConfig defaults);
  static TrainConfig from_json(const nlohmann::json& j) { return from_json(j, TrainConfig()); }
};

struct HistoryRow {
  int epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  double val_mse = 0.0;
  double val_hnorm = 0.0;
  Index singular_events = 0;  // since the previous row
};

struct TrainState {
  int epoch = 0;  // next epoch to run
  Vector theta;
  AdamState adam;
  std::vector<HistoryRow> history;
  Index skipped_updates = 0;
  Index pending_singular = 0;  // singular events not yet in a history row

  nlohmann::json to_json() const;
  static TrainState from_json(const nlohmann::json& j);
};

class TrainingCollapse : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// Order of sample indices for one epoch: a seeded shuffle depending only on
// (seed, epoch), repeated as needed to fill the requested batches.
std::vector<std::vector<Index>> epoch_batches(Index samples, const TrainConfig& cfg, int epoch);

using CheckpointFn = std::function<void(const TrainState&)>;

// Runs epochs state.epoch .. cfg.epochs - 1. Pass TrainState{0, theta0, AdamState(n)}
// for a fresh run or a loaded checkpoint to resume.
TrainState fit(const Objective& obj, TrainState state, const SampleSet& train, const SampleSet& val,
               const TrainConfig& cfg, const CheckpointFn& on_checkpoint = {});

// Evenly strided subset of at most `count` columns.
SampleSet subsample(const SampleSet& s, Index count);

void write_history_csv(std::ostream& os, const std::vector<HistoryRow>& history);

}  // namespace nphdae
