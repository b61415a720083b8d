#include "nphdae/systems.hpp"

#include <fmt/format.h>

namespace nphdae {

using K = ComponentKind;

PhdaeSystem GroundTruthSpec::system() const { return PhdaeSystem(incidence_of(graph), relations, sources); }

GroundTruthSpec fhn_system() {
  const double r2 = 0.8, c = 1.0, l = 1.0 / 0.08, e = -0.7, i = 1.0;
  GroundTruthSpec s("fhn",
                    CircuitGraph(4, 0,
                                 {{0, K::Capacitor, 1, 0},
                                  {0, K::Resistor, 1, 0},
                                  {1, K::Resistor, 2, 1},
                                  {0, K::Inductor, 0, 3},
                                  {0, K::VoltageSource, 3, 2},
                                  {0, K::CurrentSource, 1, 0}}),
                    std::make_shared<FhnRelations>(r2, c, l),
                    SourceSignal(Vector{{i, e}}));
  s.parameters = {{"R2", r2}, {"C", c}, {"L", l}, {"E", e}, {"I", i}};
  s.dt = 0.1;
  s.init_low = -3.0;
  s.init_high = 3.0;
  s.capacitance = Vector::Constant(1, c);
  s.inductance = Vector::Constant(1, l);
  return s;
}

GroundTruthSpec dgu_system(double r, double l, double c, double load_current, double source_voltage) {
  if (!(r > 0 && l > 0 && c > 0)) throw ConfigError("DGU parameters must be positive");
  GroundTruthSpec s("dgu",
                    CircuitGraph(4, 0,
                                 {{0, K::Capacitor, 3, 0},
                                  {0, K::Resistor, 2, 1},
                                  {0, K::Inductor, 2, 3},
                                  {0, K::VoltageSource, 1, 0},
                                  {0, K::CurrentSource, 0, 3}}),
                    std::make_shared<LinearRelations>(Vector::Constant(1, r), Vector::Constant(1, c), Vector::Constant(1, l)),
                    SourceSignal(Vector{{load_current, source_voltage}}));
  s.parameters = {{"R", r}, {"L", l}, {"C", c}, {"i", load_current}, {"v", source_voltage}};
  s.dt = 0.01;
  s.capacitance = Vector::Constant(1, c);
  s.inductance = Vector::Constant(1, l);
  return s;
}

GroundTruthSpec tl_system(double r, double l) {
  if (!(r > 0 && l > 0)) throw ConfigError("transmission line parameters must be positive");
  GroundTruthSpec s("tl",
                    CircuitGraph(4, 0, {{0, K::Resistor, 1, 2}, {0, K::Inductor, 3, 2}}),
                    std::make_shared<LinearRelations>(Vector::Constant(1, r), Vector(0), Vector::Constant(1, l)),
                    SourceSignal(Vector(0)));
  s.parameters = {{"R", r}, {"L", l}};
  s.dt = 0.01;
  s.capacitance = Vector(0);
  s.inductance = Vector::Constant(1, l);
  return s;
}

GroundTruthSpec tl_system_random(std::uint64_t seed) {
  std::mt19937_64 rng = stream_rng(seed, 0);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  const double r = u(rng);
  const double l = u(rng);
  return tl_system(r, l);
}

GroundTruthSpec system_by_name(const std::string& name) {
  if (name == "fhn") return fhn_system();
  if (name == "dgu") return dgu_system();
  throw ConfigError(fmt::format("unknown system '{}' (expected fhn or dgu)", name));
}

FhnRates fhn_ode_rhs(double v, double w, double current) {
  return {v - v * v * v / 3.0 - w + current, 0.08 * (v + 0.7 - 0.8 * w)};
}

Vector differential_state(const GroundTruthSpec& spec, const Vector& cap_voltages, const Vector& ind_currents) {
  if (cap_voltages.size() != spec.capacitance.size() || ind_currents.size() != spec.inductance.size()) {
    throw StructureError("differential_state: size mismatch");
  }
  Vector v(cap_voltages.size() + ind_currents.size());
  v << spec.capacitance.cwiseProduct(cap_voltages), spec.inductance.cwiseProduct(ind_currents);
  return v;
}

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

Dataset generate_dataset(const GroundTruthSpec& spec, const GenerateOptions& opt) {
  if (opt.trajectories < 0 || opt.steps < 0 || !(opt.dt > 0) || opt.noise_var < 0) {
    throw ConfigError("generate_dataset: invalid options");
  }
  const SemiExplicitSystem se(spec.system());
  const Index nc = spec.capacitance.size();
  const Index nl = spec.inductance.size();
  Dataset ds;
  for (Index k = 0; k < opt.trajectories; ++k) {
    std::mt19937_64 rng = stream_rng(opt.seed, static_cast<std::uint64_t>(k));
    std::uniform_real_distribution<double> init(spec.init_low, spec.init_high);
    Vector vc(nc), il(nl);
    for (Index i = 0; i < nc; ++i) vc(i) = init(rng);
    for (Index i = 0; i < nl; ++i) il(i) = init(rng);
    const Vector v0 = differential_state(spec, vc, il);
    Vector w0;
    try {
      w0 = se.consistent_init(v0, Vector::Zero(se.algebraic()), spec.sources.at(0.0));
    } catch (const NumericalError& e) {
      throw NumericalError(fmt::format("trajectory {}: {}", k, e.what()));
    }
    Trajectory tr = rollout(se, se.join(v0, w0), 0.0, opt.steps, opt.dt);
    if (opt.noise_var > 0) {
      std::normal_distribution<double> noise(0.0, std::sqrt(opt.noise_var));
      for (Index c = 0; c < tr.states.cols(); ++c)
        for (Index r = 0; r < tr.states.rows(); ++r) tr.states(r, c) += noise(rng);
    }
    ds.trajectories.push_back(std::move(tr));
  }
  ds.manifest = {{"system", spec.name},
                 {"parameters", spec.parameters},
                 {"dt", opt.dt},
                 {"seed", opt.seed},
                 {"noise_var", opt.noise_var},
                 {"trajectories", opt.trajectories},
                 {"steps", opt.steps},
                 {"state_dim", se.size()},
                 {"input_dim", spec.sources.size()}};
  return ds;
}

}  // namespace nphdae
