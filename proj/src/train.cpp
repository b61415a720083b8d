#include "nphdae/train.hpp"

#include "nphdae/simulate.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>
#include <thread>

namespace nphdae {

bool adam_step(AdamState& st, Vector& theta, const Vector& grad, double lr, const AdamConfig& cfg) {
  if (grad.size() != theta.size() || st.m.size() != theta.size())
    throw StructureError("Adam state, parameters and gradient differ in size");
  if (!grad.allFinite()) return false;
  ++st.step;
  st.m = cfg.beta1 * st.m + (1.0 - cfg.beta1) * grad;
  st.s = cfg.beta2 * st.s + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  theta.array() -= lr * (st.m.array() / c1) / ((st.s.array() / c2).sqrt() + cfg.eps);
  return true;
}

double cosine_lr(double epoch, double total, double lr0) {
  if (total <= 0) return lr0;
  return 0.5 * lr0 * (1.0 + std::cos(std::numbers::pi * epoch / total));
}

BatchLoss reduce_chunks(const SampleSet& batch, const ParallelOptions& par,
                        const std::function<BatchLoss(const SampleSet&)>& fn) {
  const Index n = batch.size();
  if (n == 0) throw ConfigError("empty batch");
  const Index chunk = par.chunk > 0 ? std::min(par.chunk, n) : n;
  std::vector<SampleSet> parts;
  for (Index at = 0; at < n; at += chunk) {
    std::vector<Index> cols(static_cast<std::size_t>(std::min(chunk, n - at)));
    std::iota(cols.begin(), cols.end(), at);
    parts.push_back(batch.select(cols));
  }
  std::vector<BatchLoss> results(parts.size());
  std::vector<std::exception_ptr> errors(parts.size());
  auto work = [&](std::size_t first, std::size_t stride) {
    for (std::size_t k = first; k < parts.size(); k += stride) {
      try {
        results[k] = fn(parts[k]);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, par.threads)), parts.size());
  if (threads <= 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  BatchLoss out = results.front();
  for (std::size_t k = 1; k < results.size(); ++k) {
    out.loss += results[k].loss;
    if (out.grad.size() > 0) out.grad += results[k].grad;
    out.singular += results[k].singular;
    out.samples += results[k].samples;
  }
  out.loss /= static_cast<double>(n);
  if (out.grad.size() > 0) out.grad /= static_cast<double>(n);
  return out;
}

PhdaeObjective::PhdaeObjective(SemiExplicitSystem se, NeuralRelations model, ParallelOptions par)
    : se_(std::move(se)), model_(std::move(model)), par_(par) {
  const StateLayout& lay = se_.system().layout();
  if (model_.resistors() != se_.system().relations().resistors() || model_.capacitors() != lay.n_c ||
      model_.inductors() != lay.n_l)
    throw StructureError("model relation sizes do not match the circuit");
}

BatchLoss PhdaeObjective::chunk_loss(const NeuralRelations& rel, const SampleSet& s, LossWeights w,
                                     bool with_gradient) const {
  using ad::Tensor;
  ad::Tape tape;
  const NeuralRelations model = with_gradient ? rel.bind(tape) : rel;
  const Index b = s.size();
  const Tensor x = tape.constant(s.x);

  BatchLoss out;
  out.samples = b;
  Tensor total = tape.constant(Array::Zero(1, 1));
  std::optional<Tensor> hv;
  if (w.alpha != 0.0) {
    std::vector<std::uint8_t> flagged(static_cast<std::size_t>(b), 0), mask;
    auto stage = [&](const Tensor& xs) {
      mask.clear();
      Tensor k = se_.field(model, xs, s.u, &mask);
      for (std::size_t i = 0; i < mask.size(); ++i) flagged[i] |= mask[i];
      return k;
    };
    auto [k1, h0] = se_.field_and_h(model, x, s.u, &mask);
    for (std::size_t i = 0; i < mask.size(); ++i) flagged[i] |= mask[i];
    hv = h0;
    const double dt = s.dt;
    const Tensor k2 = stage(x + k1 * (0.5 * dt));
    const Tensor k3 = stage(x + k2 * (0.5 * dt));
    const Tensor k4 = stage(x + k3 * dt);
    const Tensor pred = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    Array keep = Array::Ones(1, b);
    for (Index i = 0; i < b; ++i) {
      if (flagged[static_cast<std::size_t>(i)]) {
        keep(0, i) = 0.0;
        ++out.singular;
      }
    }
    const Tensor d = tape.constant(s.y) - pred;
    total = total + ad::sum(ad::colsum(d * d) * tape.constant(keep)) * w.alpha;
  }
  if (w.beta != 0.0) {
    if (!hv) hv = se_.h(model, x, s.u);
    total = total + ad::sum(*hv * *hv) * w.beta;
  }
  out.loss = total.value()(0, 0);
  if (!std::isfinite(out.loss)) throw NumericalError("non-finite training loss");
  if (with_gradient) {
    tape.backward(total);
    out.grad = model.gradient();
  }
  return out;
}

BatchLoss PhdaeObjective::evaluate(const Vector& theta, const SampleSet& batch, LossWeights w,
                                   bool with_gradient) const {
  const NeuralRelations rel = model_.with_params(theta);
  return reduce_chunks(batch, par_, [&](const SampleSet& s) { return chunk_loss(rel, s, w, with_gradient); });
}

ValidationMetrics PhdaeObjective::validate(const Vector& theta, const SampleSet& val) const {
  if (val.size() == 0) return {std::nan(""), std::nan("")};
  const NeuralRelations rel = model_.with_params(theta);
  std::vector<std::uint8_t> mask;
  const auto field = [&](const Array& x) { return se_.field(rel, x, val.u, &mask); };
  const Array pred = rk4(field, val.x, val.dt);
  const Array h = se_.h(rel, val.x, val.u);
  ValidationMetrics m;
  m.mse = (pred - val.y).square().mean();
  m.h_norm_sq = h.square().colwise().sum().mean();
  return m;
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be nonnegative");
  if (switch_epoch < 0 || switch_epoch > epochs) throw ConfigError("switch epoch must lie in [0, epochs]");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (batches_per_epoch < 0) throw ConfigError("batches_per_epoch must be nonnegative");
  if (!(lr > 0)) throw ConfigError("learning rate must be positive");
  if (log_every < 1) throw ConfigError("log_every must be at least 1");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be nonnegative");
  if (parallel.threads < 1) throw ConfigError("threads must be at least 1");
  if (parallel.chunk < 0) throw ConfigError("chunk must be nonnegative");
  for (Index w : shape.hidden)
    if (w < 1) throw ConfigError("hidden widths must be positive");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"switch_epoch", switch_epoch},
          {"batch_size", batch_size},
          {"batches_per_epoch", batches_per_epoch},
          {"lr", lr},
          {"alpha_phase1", phase1.alpha},
          {"beta_phase1", phase1.beta},
          {"alpha_phase2", phase2.alpha},
          {"beta_phase2", phase2.beta},
          {"adam_beta1", adam.beta1},
          {"adam_beta2", adam.beta2},
          {"adam_eps", adam.eps},
          {"seed", seed},
          {"hidden", shape.hidden},
          {"activation", to_string(shape.activation)},
          {"log_every", log_every},
          {"checkpoint_every", checkpoint_every},
          {"validation_samples", validation_samples},
          {"max_singular_fraction", max_singular_fraction},
          {"chunk", parallel.chunk},
          {"threads", parallel.threads}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j, TrainConfig c) {
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "epochs") c.epochs = v.get<int>();
      else if (key == "switch_epoch") c.switch_epoch = v.get<int>();
      else if (key == "batch_size") c.batch_size = v.get<Index>();
      else if (key == "batches_per_epoch") c.batches_per_epoch = v.get<int>();
      else if (key == "lr") c.lr = v.get<double>();
      else if (key == "alpha_phase1") c.phase1.alpha = v.get<double>();
      else if (key == "beta_phase1") c.phase1.beta = v.get<double>();
      else if (key == "alpha_phase2") c.phase2.alpha = v.get<double>();
      else if (key == "beta_phase2") c.phase2.beta = v.get<double>();
      else if (key == "adam_beta1") c.adam.beta1 = v.get<double>();
      else if (key == "adam_beta2") c.adam.beta2 = v.get<double>();
      else if (key == "adam_eps") c.adam.eps = v.get<double>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "hidden") c.shape.hidden = v.get<std::vector<Index>>();
      else if (key == "activation") c.shape.activation = parse_activation(v.get<std::string>());
      else if (key == "log_every") c.log_every = v.get<int>();
      else if (key == "checkpoint_every") c.checkpoint_every = v.get<int>();
      else if (key == "validation_samples") c.validation_samples = v.get<Index>();
      else if (key == "max_singular_fraction") c.max_singular_fraction = v.get<double>();
      else if (key == "chunk") c.parallel.chunk = v.get<Index>();
      else if (key == "threads") c.parallel.threads = v.get<int>();
      else throw ConfigError(fmt::format("unknown training config key '{}'", key));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("bad training config: {}", e.what()));
  }
  c.validate();
  return c;
}

namespace {

nlohmann::json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector json_vec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

}  // namespace

nlohmann::json TrainState::to_json() const {
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& r : history)
    hist.push_back({r.epoch, r.loss, r.lr, r.val_mse, r.val_hnorm, r.singular_events});
  return {{"epoch", epoch},
          {"theta", vec_json(theta)},
          {"adam", {{"m", vec_json(adam.m)}, {"s", vec_json(adam.s)}, {"step", adam.step}}},
          {"history", hist},
          {"skipped_updates", skipped_updates},
          {"pending_singular", pending_singular}};
}

TrainState TrainState::from_json(const nlohmann::json& j) {
  try {
    TrainState st;
    st.epoch = j.at("epoch").get<int>();
    st.theta = json_vec(j.at("theta"));
    st.adam.m = json_vec(j.at("adam").at("m"));
    st.adam.s = json_vec(j.at("adam").at("s"));
    st.adam.step = j.at("adam").at("step").get<std::int64_t>();
    for (const auto& r : j.at("history")) {
      // NaN metrics are serialized as null.
      auto num = [](const nlohmann::json& x) { return x.is_null() ? std::nan("") : x.get<double>(); };
      st.history.push_back({r.at(0).get<int>(), num(r.at(1)), num(r.at(2)), num(r.at(3)), num(r.at(4)),
                            r.at(5).get<Index>()});
    }
    st.skipped_updates = j.at("skipped_updates").get<Index>();
    st.pending_singular = j.at("pending_singular").get<Index>();
    if (st.adam.m.size() != st.theta.size() || st.adam.s.size() != st.theta.size())
      throw ConfigError("checkpoint optimizer state does not match the parameters");
    return st;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("bad training checkpoint: {}", e.what()));
  }
}

std::vector<std::vector<Index>> epoch_batches(Index samples, const TrainConfig& cfg, int epoch) {
  if (samples <= 0) throw ConfigError("no training samples");
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x7261696eu};
  std::mt19937_64 rng(seq);
  std::vector<Index> perm(static_cast<std::size_t>(samples));
  auto reshuffle = [&] {
    std::iota(perm.begin(), perm.end(), Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
  };
  reshuffle();
  const Index bs = std::min(cfg.batch_size, samples);
  std::vector<std::vector<Index>> out;
  if (cfg.batches_per_epoch == 0) {
    for (Index at = 0; at < samples; at += bs)
      out.emplace_back(perm.begin() + at, perm.begin() + std::min(samples, at + bs));
    return out;
  }
  Index at = 0;
  for (int k = 0; k < cfg.batches_per_epoch; ++k) {
    if (at + bs > samples) {
      reshuffle();
      at = 0;
    }
    out.emplace_back(perm.begin() + at, perm.begin() + at + bs);
    at += bs;
  }
  return out;
}

TrainState fit(const Objective& obj, TrainState st, const SampleSet& train, const SampleSet& val,
               const TrainConfig& cfg, const CheckpointFn& on_checkpoint) {
  cfg.validate();
  if (st.theta.size() != obj.param_count()) throw StructureError("initial parameters do not match the model");
  if (st.adam.m.size() != st.theta.size()) st.adam = AdamState(st.theta.size());
  if (cfg.epochs > 0 && train.size() == 0) throw ConfigError("training set is empty");

  for (int epoch = st.epoch; epoch < cfg.epochs; ++epoch) {
    const LossWeights w = cfg.weights_at(epoch);
    const double lr = cosine_lr(epoch, cfg.epochs, cfg.lr);
    double loss = 0.0;
    Index singular = 0, seen = 0;
    const auto batches = epoch_batches(train.size(), cfg, epoch);
    for (const auto& cols : batches) {
      const BatchLoss bl = obj.evaluate(st.theta, train.select(cols), w, true);
      loss += bl.loss;
      singular += bl.singular;
      seen += bl.samples;
      if (!adam_step(st.adam, st.theta, bl.grad, lr, cfg.adam)) ++st.skipped_updates;
    }
    if (static_cast<double>(singular) > cfg.max_singular_fraction * static_cast<double>(seen))
      throw TrainingCollapse(fmt::format("epoch {}: {} of {} samples hit a singular dh/dw", epoch, singular, seen));
    st.pending_singular += singular;
    st.epoch = epoch + 1;
    if (st.epoch % cfg.log_every == 0 || st.epoch == cfg.epochs) {
      const ValidationMetrics vm = obj.validate(st.theta, val);
      st.history.push_back({epoch, loss / static_cast<double>(batches.size()), lr, vm.mse, vm.h_norm_sq,
                            st.pending_singular});
      st.pending_singular = 0;
    }
    if (on_checkpoint && cfg.checkpoint_every > 0 && (st.epoch % cfg.checkpoint_every == 0 || st.epoch == cfg.epochs))
      on_checkpoint(st);
  }
  return st;
}

SampleSet subsample(const SampleSet& s, Index count) {
  if (count <= 0 || s.size() <= count) return s;
  std::vector<Index> cols(static_cast<std::size_t>(count));
  for (Index k = 0; k < count; ++k) cols[static_cast<std::size_t>(k)] = k * s.size() / count;
  return s.select(cols);
}

void write_history_csv(std::ostream& os, const std::vector<HistoryRow>& history) {
  os << "epoch,loss,lr,val_mse,val_hnorm,singular_events\n";
  for (const auto& r : history)
    os << r.epoch << ',' << format_double(r.loss) << ',' << format_double(r.lr) << ',' << format_double(r.val_mse)
       << ',' << format_double(r.val_hnorm) << ',' << r.singular_events << '\n';
}

}  // namespace nphdae
