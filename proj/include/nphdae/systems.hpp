#pragma once

#include "nphdae/dataset.hpp"

#include <json.hpp>

#include <cstdint>
#include <memory>
#include <random>
#include <string>

namespace nphdae {

// FitzHugh-Nagumo circuit relations: g = (v1^3/3 - v1, v2/R2), q = c/C, H = phi^2/2L.
class FhnRelations final : public RelationsBase<FhnRelations> {
 public:
  FhnRelations(double r2 = 0.8, double c = 1.0, double l = 12.5) : r2_(r2), c_(c), l_(l) {}

  Index resistors() const override { return 2; }
  Index capacitors() const override { return 1; }
  Index inductors() const override { return 1; }

  template <class T>
  T g_t(const T& v) const {
    const T v1 = ad::block_rows(v, 0, 1);
    const T v2 = ad::block_rows(v, 1, 1);
    return ad::vstack({T(v1 * v1 * v1 / 3.0 - v1), T(v2 / r2_)});
  }
  template <class T>
  T q_t(const T& c) const {
    return T(c / c_);
  }
  template <class T>
  T grad_h_t(const T& phi) const {
    return T(phi / l_);
  }

 private:
  double r2_, c_, l_;
};

struct GroundTruthSpec {
  GroundTruthSpec(std::string n, CircuitGraph g, std::shared_ptr<const ComponentRelations> rel, SourceSignal src)
      : name(std::move(n)), graph(std::move(g)), relations(std::move(rel)), sources(std::move(src)) {}

  std::string name;
  CircuitGraph graph;
  std::shared_ptr<const ComponentRelations> relations;
  SourceSignal sources;
  nlohmann::json parameters = nlohmann::json::object();
  double dt = 0.01;
  // Initial capacitor voltages and inductor currents ~ U(init_low, init_high);
  // charges and fluxes follow from the capacitances and inductances.
  double init_low = -1.0;
  double init_high = 1.0;
  Vector capacitance;
  Vector inductance;

  PhdaeSystem system() const;
};

GroundTruthSpec fhn_system();
GroundTruthSpec dgu_system(double r = 1.2, double l = 1.8, double c = 2.2, double load_current = 0.1,
                           double source_voltage = 1.0);
GroundTruthSpec tl_system(double r, double l);
// Line parameters drawn from U(0.1, 2.0).
GroundTruthSpec tl_system_random(std::uint64_t seed);
GroundTruthSpec system_by_name(const std::string& name);

struct FhnRates {
  double v_dot, w_dot;
};
FhnRates fhn_ode_rhs(double v, double w, double current = 1.0);

// Differential state (q_C, phi_L) from capacitor voltages and inductor currents.
Vector differential_state(const GroundTruthSpec& spec, const Vector& cap_voltages, const Vector& ind_currents);

struct GenerateOptions {
  Index trajectories = 30;
  Index steps = 1000;
  double dt = 0.1;
  std::uint64_t seed = 0;
  double noise_var = 0.0;
};

// Sampled initial differential states, consistent algebraic states, RK4 rollout,
// then optional Gaussian observation noise on the stored states.
Dataset generate_dataset(const GroundTruthSpec& spec, const GenerateOptions& opt);

// Stream for trajectory `index` of a run seeded with `seed`.
std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t index);

}  // namespace nphdae
