#pragma once

#include "nphdae/reduction.hpp"

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace nphdae {

// x' = field(x, u, t) on n x batch arrays.
using VectorField = std::function<Array(const Array& x, const Array& u, double t)>;
// Inputs (m x 1) held over the step starting at t.
using InputSignal = std::function<Array(double t)>;

// Classical RK4 with the input held over the step.
template <class T, class F>
T rk4(F&& field, const T& x, double dt) {
  const T k1 = field(x);
  const T k2 = field(T(x + k1 * (0.5 * dt)));
  const T k3 = field(T(x + k2 * (0.5 * dt)));
  const T k4 = field(T(x + k3 * dt));
  return T(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0));
}

Array rk4_step(const VectorField& field, const Array& x, const Array& u, double t, double dt);

struct Trajectory {
  std::vector<double> times;
  Matrix states;  // n x K+1
  Matrix inputs;  // m x K+1

  Index steps() const { return static_cast<Index>(times.size()) - 1; }
  Index state_dim() const { return states.rows(); }
  Index input_dim() const { return inputs.rows(); }
  double dt() const { return times.size() > 1 ? times[1] - times[0] : 0.0; }
  // Throws if spacing is not uniform to 1e-12 or sizes disagree.
  void check() const;
};

// K steps from each column of x0 (n x batch); returns batch trajectories.
std::vector<Trajectory> rollout_batch(const VectorField& field, const InputSignal& inputs, const Array& x0, double t0,
                                      Index steps, double dt);
Trajectory rollout(const VectorField& field, const InputSignal& inputs, const Vector& x0, double t0, Index steps,
                   double dt);

// Field and inputs of a semi-explicit system driven by its own sources.
VectorField field_of(const SemiExplicitSystem& se);
InputSignal inputs_of(const PhdaeSystem& sys);
Trajectory rollout(const SemiExplicitSystem& se, const Vector& x0, double t0, Index steps, double dt);

struct MetricsSeries {
  std::vector<double> times;
  std::vector<double> mse;
  std::vector<double> h_norm_sq;
};

using ConstraintFn = std::function<Array(const Array& x, const Array& u)>;

MetricsSeries metrics(const Trajectory& pred, const Trajectory& truth, const ConstraintFn& true_h);
ConstraintFn constraint_of(const SemiExplicitSystem& se);

// Shortest round-trip decimal form.
std::string format_double(double v);

void write_trajectory_csv(std::ostream& os, const Trajectory& traj);
void write_trajectory_csv(const std::string& path, const Trajectory& traj);
Trajectory read_trajectory_csv(const std::string& path);
void write_metrics_csv(std::ostream& os, const MetricsSeries& m);
void write_metrics_csv(const std::string& path, const MetricsSeries& m);

}  // namespace nphdae
