#include "nphdae/simulate.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <sstream>

namespace nphdae {

namespace {

void check_finite(const Array& a, double t, const char* what) {
  if (!a.allFinite()) throw NumericalError(fmt::format("non-finite {} at t = {}", what, t));
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

Array rk4_step(const VectorField& field, const Array& x, const Array& u, double t, double dt) {
  auto stage = [&](const Array& y) {
    Array k = field(y, u, t);
    check_finite(k, t, "RK4 stage");
    return k;
  };
  return rk4(stage, x, dt);
}

void Trajectory::check() const {
  const Index k = static_cast<Index>(times.size());
  if (states.cols() != k || inputs.cols() != k) {
    throw StructureError(fmt::format("trajectory has {} times, {} states, {} inputs", k, states.cols(), inputs.cols()));
  }
  if (k < 2) return;
  const double h = times[1] - times[0];
  for (Index i = 1; i < k; ++i) {
    const double gap = times[static_cast<std::size_t>(i)] - times[static_cast<std::size_t>(i - 1)];
    if (std::abs(gap - h) > 1e-12 * std::max(1.0, std::abs(times[static_cast<std::size_t>(i)]))) {
      throw StructureError(fmt::format("trajectory time grid is not uniform at index {}", i));
    }
  }
}

std::vector<Trajectory> rollout_batch(const VectorField& field, const InputSignal& inputs, const Array& x0, double t0,
                                Index steps, double dt) {
  if (steps < 0) throw ConfigError("rollout: negative step count");
  const Index batch = x0.cols();
  const Array u0 = inputs(t0);
  std::vector<Trajectory> out(static_cast<std::size_t>(batch));
  for (auto& tr : out) {
    tr.times.resize(static_cast<std::size_t>(steps + 1));
    tr.states.resize(x0.rows(), steps + 1);
    tr.inputs.resize(u0.rows(), steps + 1);
  }
  Array x = x0;
  for (Index k = 0; k <= steps; ++k) {
    const double t = t0 + static_cast<double>(k) * dt;
    const Array u = inputs(t);
    for (Index b = 0; b < batch; ++b) {
      auto& tr = out[static_cast<std::size_t>(b)];
      tr.times[static_cast<std::size_t>(k)] = t;
      tr.states.col(k) = x.col(b).matrix();
      tr.inputs.col(k) = u.col(0).matrix();
    }
    if (k == steps) break;
    try {
      x = rk4_step(field, x, broadcast_inputs(u, batch), t, dt);
    } catch (const SingularMatrixError& e) {
      throw SingularMatrixError(fmt::format("step {} (t = {}): {}", k, t, e.what()), e.pivot());
    } catch (const NumericalError& e) {
      throw NumericalError(fmt::format("step {}: {}", k, e.what()));
    }
  }
  return out;
}

Trajectory rollout(const VectorField& field, const InputSignal& inputs, const Vector& x0, double t0, Index steps,
                   double dt) {
  return rollout_batch(field, inputs, Array(x0.array()), t0, steps, dt).front();
}

VectorField field_of(const SemiExplicitSystem& se) {
  return [&se](const Array& x, const Array& u, double) { return se.field(x, u); };
}

InputSignal inputs_of(const PhdaeSystem& sys) {
  return [&sys](double t) { return Array(sys.sources().at(t).array()); };
}

Trajectory rollout(const SemiExplicitSystem& se, const Vector& x0, double t0, Index steps, double dt) {
  return rollout(field_of(se), inputs_of(se.system()), x0, t0, steps, dt);
}

ConstraintFn constraint_of(const SemiExplicitSystem& se) {
  return [&se](const Array& x, const Array& u) { return se.h(x, u); };
}

MetricsSeries metrics(const Trajectory& pred, const Trajectory& truth, const ConstraintFn& true_h) {
  if (pred.times.size() != truth.times.size() || pred.states.rows() != truth.states.rows()) {
    throw StructureError("metrics: prediction and truth grids differ");
  }
  for (std::size_t i = 0; i < pred.times.size(); ++i) {
    if (std::abs(pred.times[i] - truth.times[i]) > 1e-9) throw StructureError("metrics: time grids differ");
  }
  MetricsSeries m;
  m.times = pred.times;
  const Matrix diff = pred.states - truth.states;
  const Array hv = true_h(pred.states.array(), pred.inputs.array());
  for (Index k = 0; k < pred.states.cols(); ++k) {
    m.mse.push_back(diff.col(k).squaredNorm() / static_cast<double>(diff.rows()));
    m.h_norm_sq.push_back(hv.col(k).matrix().squaredNorm());
  }
  return m;
}

std::string format_double(double v) { return fmt::format("{}", v); }

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  os << "t";
  for (Index i = 0; i < traj.state_dim(); ++i) os << ",x" << i;
  for (Index i = 0; i < traj.input_dim(); ++i) os << ",u" << i;
  os << "\n";
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    std::string line = format_double(traj.times[k]);
    for (Index i = 0; i < traj.state_dim(); ++i) line += "," + format_double(traj.states(i, static_cast<Index>(k)));
    for (Index i = 0; i < traj.input_dim(); ++i) line += "," + format_double(traj.inputs(i, static_cast<Index>(k)));
    os << line << "\n";
  }
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  write_trajectory_csv(os, traj);
  if (!os) throw IoError("failed writing " + path);
}

Trajectory read_trajectory_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path);
  std::string line;
  if (!std::getline(is, line)) throw IoError(path + ": empty file");
  const auto header = split_csv(line);
  if (header.empty() || header[0] != "t") throw IoError(path + ": header must start with t");
  Index n = 0, m = 0;
  for (std::size_t i = 1; i < header.size(); ++i) {
    const std::string& h = header[i];
    if (!h.empty() && h[0] == 'x' && m == 0 && h == "x" + std::to_string(n)) {
      ++n;
    } else if (!h.empty() && h[0] == 'u' && h == "u" + std::to_string(m)) {
      ++m;
    } else {
      throw IoError(fmt::format("{}: unexpected column '{}'", path, h));
    }
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (static_cast<Index>(cells.size()) != 1 + n + m) throw IoError(fmt::format("{}: row {} has {} cells", path, rows.size() + 1, cells.size()));
    std::vector<double> row;
    for (const auto& c : cells) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(c, &used));
        if (used != c.size()) throw std::invalid_argument(c);
      } catch (const std::exception&) {
        throw IoError(fmt::format("{}: bad number '{}'", path, c));
      }
    }
    rows.push_back(std::move(row));
  }
  Trajectory tr;
  const Index k = static_cast<Index>(rows.size());
  tr.states.resize(n, k);
  tr.inputs.resize(m, k);
  for (Index r = 0; r < k; ++r) {
    const auto& row = rows[static_cast<std::size_t>(r)];
    tr.times.push_back(row[0]);
    for (Index i = 0; i < n; ++i) tr.states(i, r) = row[static_cast<std::size_t>(1 + i)];
    for (Index i = 0; i < m; ++i) tr.inputs(i, r) = row[static_cast<std::size_t>(1 + n + i)];
  }
  tr.check();
  return tr;
}

void write_metrics_csv(std::ostream& os, const MetricsSeries& m) {
  os << "t,mse,h_norm_sq\n";
  for (std::size_t k = 0; k < m.times.size(); ++k) {
    os << format_double(m.times[k]) << "," << format_double(m.mse[k]) << "," << format_double(m.h_norm_sq[k]) << "\n";
  }
}

void write_metrics_csv(const std::string& path, const MetricsSeries& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  write_metrics_csv(os, m);
  if (!os) throw IoError("failed writing " + path);
}

}  // namespace nphdae
