#include "nphdae/baseline.hpp"
#include "nphdae/compose.hpp"
#include "nphdae/evaluate.hpp"
#include "nphdae/systems.hpp"
#include "nphdae/train.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

namespace py = pybind11;
using namespace nphdae;
using json = nlohmann::json;

namespace {

py::object to_py(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }
json from_py(const py::handle& o) {
  return json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

py::dict trajectory_dict(const Trajectory& t) {
  py::dict d;
  d["t"] = Vector(Eigen::Map<const Vector>(t.times.data(), static_cast<Index>(t.times.size())));
  d["states"] = Matrix(t.states.transpose());
  d["inputs"] = Matrix(t.inputs.transpose());
  return d;
}

json spec_json(const GroundTruthSpec& s) { return {{"name", s.name}, {"parameters", s.parameters}}; }

TrainConfig train_config(const py::dict& config, bool baseline) {
  json given = from_py(config);
  TrainConfig defaults;
  if (baseline) defaults.lr = 1e-3;
  if (given.contains("epochs") && !given.contains("switch_epoch"))
    given["switch_epoch"] = given.at("epochs").get<int>() / 4;
  TrainConfig cfg = TrainConfig::from_json(given, defaults);
  cfg.validate();
  return cfg;
}

py::list history_list(const std::vector<HistoryRow>& rows) {
  py::list out;
  for (const auto& r : rows) {
    py::dict d;
    d["epoch"] = r.epoch;
    d["loss"] = r.loss;
    d["lr"] = r.lr;
    d["val_mse"] = r.val_mse;
    d["val_hnorm"] = r.val_hnorm;
    d["singular_events"] = r.singular_events;
    out.append(d);
  }
  return out;
}

Vector start_state(const SemiExplicitSystem& se, const Vector& v0) {
  if (v0.size() != se.differential()) throw ConfigError("initial state needs one value per differential state");
  const Vector u = se.system().sources().at(0.0);
  return se.join(v0, se.consistent_init(v0, Vector::Zero(se.algebraic()), u));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Neural port-Hamiltonian DAE models of electrical circuits";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  py::class_<GroundTruthSpec>(m, "Spec")
      .def_readonly("name", &GroundTruthSpec::name)
      .def_readonly("dt", &GroundTruthSpec::dt)
      .def_property_readonly("parameters", [](const GroundTruthSpec& s) { return to_py(s.parameters); })
      .def("differential_state", &differential_state, py::arg("capacitor_voltages"), py::arg("inductor_currents"))
      .def("__repr__", [](const GroundTruthSpec& s) { return "<Spec " + spec_json(s).dump() + ">"; });

  m.def("fhn", &fhn_system);
  m.def("dgu", &dgu_system, py::arg("R") = 1.2, py::arg("L") = 1.8, py::arg("C") = 2.2, py::arg("i") = 0.1,
        py::arg("v") = 1.0);
  m.def("tl", &tl_system, py::arg("R"), py::arg("L"));
  m.def("tl_random", &tl_system_random, py::arg("seed"));

  py::class_<SemiExplicitSystem>(m, "System")
      .def(py::init([](const GroundTruthSpec& s) { return SemiExplicitSystem(s.system()); }))
      .def_static(
          "from_model",
          [](const GroundTruthSpec& s, const std::string& model_json) {
            const SemiExplicitSystem truth(s.system());
            auto rel = std::make_shared<NeuralRelations>(NeuralRelations::from_json(json::parse(model_json)));
            return truth.with_relations(std::move(rel));
          },
          py::arg("spec"), py::arg("model_json"), "System with the trained relations of an N-PHDAE model.")
      .def_property_readonly("size", &SemiExplicitSystem::size)
      .def_property_readonly("differential", &SemiExplicitSystem::differential)
      .def_property_readonly("algebraic", &SemiExplicitSystem::algebraic)
      .def_property_readonly("E", [](const SemiExplicitSystem& s) { return s.system().matrices().e; })
      .def_property_readonly("J", [](const SemiExplicitSystem& s) { return s.system().matrices().j; })
      .def_property_readonly("B", [](const SemiExplicitSystem& s) { return s.system().matrices().b; })
      .def("inputs", [](const SemiExplicitSystem& s, double t) { return s.system().sources().at(t); }, py::arg("t") = 0.0)
      .def("field", [](const SemiExplicitSystem& s, const Vector& x, const Vector& u) {
        return Vector(s.field(Array(x.array()), Array(u.array())).matrix());
      })
      .def("h", [](const SemiExplicitSystem& s, const Vector& x, const Vector& u) {
        return Vector(s.h(Array(x.array()), Array(u.array())).matrix());
      })
      .def("dh_dw", &SemiExplicitSystem::dh_dw_matrix)
      .def(
          "consistent_init",
          [](const SemiExplicitSystem& s, const Vector& v0) { return start_state(s, v0); }, py::arg("v0"),
          "Full state with the algebraic part solved from the constraint.")
      .def(
          "rollout",
          [](const SemiExplicitSystem& s, const Vector& v0, Index steps, double dt) {
            const Vector x0 = start_state(s, v0);
            Trajectory t;
            {
              py::gil_scoped_release release;
              t = rollout(s, x0, 0.0, steps, dt);
            }
            return trajectory_dict(t);
          },
          py::arg("v0"), py::arg("steps"), py::arg("dt"));

  py::class_<Dataset>(m, "Dataset")
      .def("__len__", [](const Dataset& d) { return d.trajectories.size(); })
      .def("__getitem__",
           [](const Dataset& d, std::size_t i) {
             if (i >= d.trajectories.size()) throw py::index_error();
             return trajectory_dict(d.trajectories[i]);
           })
      .def_property_readonly("dt", &Dataset::dt)
      .def_property_readonly("manifest", [](const Dataset& d) { return to_py(d.manifest); })
      .def("split", &Dataset::split, py::arg("count"))
      .def("save", [](const Dataset& d, const std::string& dir) { save_dataset(dir, d); });

  m.def("load_dataset", &load_dataset, py::arg("dir"));
  m.def(
      "generate_dataset",
      [](const GroundTruthSpec& spec, Index trajectories, Index steps, std::optional<double> dt, std::uint64_t seed,
         double noise) {
        GenerateOptions g;
        g.trajectories = trajectories;
        g.steps = steps;
        g.dt = dt ? *dt : spec.dt;
        g.seed = seed;
        g.noise_var = noise;
        py::gil_scoped_release release;
        return generate_dataset(spec, g);
      },
      py::arg("spec"), py::arg("trajectories") = 30, py::arg("steps") = 1000, py::arg("dt") = py::none(),
      py::arg("seed") = 0, py::arg("noise") = 0.0);

  m.def(
      "train",
      [](const GroundTruthSpec& spec, const Dataset& train, const Dataset& val, const py::dict& config, bool baseline) {
        const TrainConfig cfg = train_config(config, baseline);
        const SemiExplicitSystem truth(spec.system());
        const SampleSet ts = train.samples();
        const SampleSet vs = subsample(val.samples(), cfg.validation_samples);
        std::optional<NeuralRelations> net;
        std::optional<BlackBoxOde> node;
        Vector theta0;
        if (baseline) {
          node = BlackBoxOde::init(truth.size(), truth.system().matrices().inputs(), cfg.shape, cfg.seed);
          theta0 = node->params();
        } else {
          const ComponentRelations& rel = truth.system().relations();
          net = NeuralRelations::init(rel.resistors(), rel.capacitors(), rel.inductors(), cfg.shape, cfg.seed);
          theta0 = net->params().theta;
        }
        TrainState st{0, theta0, AdamState(theta0.size()), {}, 0, 0};
        {
          py::gil_scoped_release release;
          if (baseline)
            st = node_fit(NodeObjective(*node, truth, cfg.parallel), std::move(st), ts, vs, cfg);
          else
            st = fit(PhdaeObjective(truth, *net, cfg.parallel), std::move(st), ts, vs, cfg);
        }
        json model = baseline ? node->with_params(st.theta).to_json() : net->with_params(st.theta).to_json();
        model["system"] = spec_json(spec);
        return py::make_tuple(model.dump(), history_list(st.history));
      },
      py::arg("spec"), py::arg("train"), py::arg("val"), py::arg("config") = py::dict(), py::arg("baseline") = false,
      "Fits an N-PHDAE (or, with baseline=True, a neural ODE). Returns (model JSON, history).");

  m.def(
      "evaluate",
      [](const GroundTruthSpec& spec, const std::string& model_json, const Dataset& data, Index steps) {
        const json j = json::parse(model_json);
        const SemiExplicitSystem truth(spec.system());
        EvalReport rep;
        {
          py::gil_scoped_release release;
          if (j.at("kind") == "node") {
            rep = evaluate(node_predictor(BlackBoxOde::from_json(j)), data, truth, steps);
          } else {
            const auto rel = std::make_shared<NeuralRelations>(NeuralRelations::from_json(j));
            rep = evaluate(phdae_predictor(truth.with_relations(rel)), data, truth, steps);
          }
        }
        return to_py(rep.summary());
      },
      py::arg("spec"), py::arg("model_json"), py::arg("data"), py::arg("steps"));

  m.def(
      "compose",
      [](const std::vector<GroundTruthSpec>& specs, const std::vector<std::array<Index, 4>>& couplings) {
        std::vector<Subsystem> parts;
        for (const auto& s : specs) parts.push_back({s.name, s.graph, s.system()});
        std::vector<Coupling> cs;
        for (const auto& c : couplings)
          cs.push_back({static_cast<std::size_t>(c[0]), c[1], static_cast<std::size_t>(c[2]), c[3]});
        const CompositeSystem comp(std::move(parts));
        const Eigen::MatrixXi a = interconnection(comp, cs);
        return py::make_tuple(SemiExplicitSystem(nphdae::compose(comp, a)), a);
      },
      py::arg("subsystems"), py::arg("couplings"),
      "Couples subsystems through (sub_a, node_a, sub_b, node_b) edges. Returns (system, A_lambda).");

  m.def(
      "complete_graph_couplings",
      [](std::size_t units, Index unit_node, Index line_in, Index line_out) {
        std::vector<std::array<Index, 4>> out;
        for (const auto& c : complete_graph_couplings(units, unit_node, line_in, line_out))
          out.push_back({static_cast<Index>(c.sub_a), c.node_a, static_cast<Index>(c.sub_b), c.node_b});
        return out;
      },
      py::arg("units"), py::arg("unit_node") = 3, py::arg("line_in") = 1, py::arg("line_out") = 3);
}
