#include "nphdae/evaluate.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace nphdae {

namespace {

ModelRollout guarded(const VectorField& field, const InputSignal& inputs, const Vector& x0, const Trajectory& ref,
                     Index steps) {
  const double dt = ref.dt();
  ModelRollout out;
  Trajectory& tr = out.traj;
  tr.states = Matrix::Constant(x0.size(), steps + 1, std::numeric_limits<double>::quiet_NaN());
  tr.inputs = Matrix::Zero(inputs(ref.times.front()).rows(), steps + 1);
  Array x = x0.array();
  for (Index k = 0; k <= steps; ++k) {
    const double t = ref.times.front() + static_cast<double>(k) * dt;
    tr.times.push_back(t);
    const Array u = inputs(t);
    tr.inputs.col(k) = u.matrix();
    if (out.failed_step >= 0) continue;
    tr.states.col(k) = x.matrix();
    if (k == steps) break;
    try {
      x = rk4_step(field, x, u, t, dt);
    } catch (const NumericalError&) {
      out.failed_step = k + 1;
    }
  }
  return out;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  for (double& x : v)
    if (std::isnan(x)) x = std::numeric_limits<double>::infinity();
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

}  // namespace

Predictor phdae_predictor(const SemiExplicitSystem& model) {
  return [&model](const Trajectory& ref, Index steps) {
    const Vector x_ref = ref.states.col(0);
    const Index d = model.differential();
    const Vector u0 = ref.inputs.col(0);
    Vector x0;
    bool fallback = false;
    try {
      x0 = model.join(x_ref.head(d), model.consistent_init(x_ref.head(d), x_ref.tail(model.algebraic()), u0));
    } catch (const NumericalError&) {
      x0 = x_ref;
      fallback = true;
    }
    ModelRollout r = guarded(field_of(model), inputs_of(model.system()), x0, ref, steps);
    r.fallback_init = fallback;
    return r;
  };
}

Predictor node_predictor(const BlackBoxOde& model) {
  return [&model](const Trajectory& ref, Index steps) {
    const Matrix inputs = ref.inputs;
    const VectorField f = [&model](const Array& x, const Array& u, double) { return model.field(x, u); };
    // Inputs are held from the reference's first sample when the model runs past its end.
    const double t0 = ref.times.front(), dt = ref.dt();
    const InputSignal u = [inputs, t0, dt](double t) {
      const Index k = std::clamp<Index>(static_cast<Index>(std::floor((t - t0) / dt + 1e-9)), 0, inputs.cols() - 1);
      return Array(inputs.col(k).array());
    };
    return guarded(f, u, ref.states.col(0), ref, steps);
  };
}

double EvalReport::median_h() const {
  std::vector<double> all;
  for (const auto& s : series) all.insert(all.end(), s.h_norm_sq.begin(), s.h_norm_sq.end());
  return median_of(std::move(all));
}

double EvalReport::median_mse() const {
  std::vector<double> all;
  for (const auto& s : series) all.insert(all.end(), s.mse.begin(), s.mse.end());
  return median_of(std::move(all));
}

double EvalReport::mse_at(double t) const {
  if (series.empty()) return std::nan("");
  double sum = 0.0;
  for (const auto& s : series) {
    const auto k = static_cast<std::size_t>(std::llround((t - s.times.front()) / dt));
    if (k >= s.mse.size()) throw ConfigError(fmt::format("time {} lies beyond the evaluated horizon", t));
    sum += s.mse[k];
  }
  return sum / static_cast<double>(series.size());
}

nlohmann::json EvalReport::summary() const {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  const double horizon = series.empty() ? 0.0 : series.front().times.back();
  return {{"trajectories", series.size()},
          {"steps", series.empty() ? 0 : series.front().times.size() - 1},
          {"dt", dt},
          {"median_h_norm_sq", num(median_h())},
          {"median_mse", num(median_mse())},
          {"final_mse", num(series.empty() ? std::nan("") : mse_at(horizon))},
          {"failed_rollouts", std::count_if(failed_steps.begin(), failed_steps.end(), [](Index k) { return k >= 0; })},
          {"fallback_inits", fallback_inits}};
}

EvalReport evaluate(const Predictor& predict, const Dataset& reference, const SemiExplicitSystem& truth, Index steps) {
  if (reference.empty()) throw ConfigError("evaluation dataset is empty");
  if (reference.state_dim() != truth.size()) throw StructureError("dataset and reference system differ in state size");
  EvalReport rep;
  rep.dt = reference.dt();
  for (const Trajectory& ref : reference.trajectories) {
    if (ref.steps() < steps) throw ConfigError(fmt::format("trajectory has {} steps, {} requested", ref.steps(), steps));
    Trajectory cut;
    cut.times.assign(ref.times.begin(), ref.times.begin() + steps + 1);
    cut.states = ref.states.leftCols(steps + 1);
    cut.inputs = ref.inputs.leftCols(steps + 1);
    const ModelRollout r = predict(cut, steps);
    if (r.traj.state_dim() != truth.size()) throw StructureError("model and reference differ in state size");
    rep.series.push_back(metrics(r.traj, cut, constraint_of(truth)));
    rep.failed_steps.push_back(r.failed_step);
    rep.fallback_inits += r.fallback_init ? 1 : 0;
  }
  return rep;
}

void write_eval_csv(std::ostream& os, const EvalReport& report) {
  os << "trajectory,t,mse,h_norm_sq\n";
  for (std::size_t j = 0; j < report.series.size(); ++j) {
    const MetricsSeries& s = report.series[j];
    for (std::size_t k = 0; k < s.times.size(); ++k)
      os << j << ',' << format_double(s.times[k]) << ',' << format_double(s.mse[k]) << ','
         << format_double(s.h_norm_sq[k]) << '\n';
  }
}

}  // namespace nphdae
