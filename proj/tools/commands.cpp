#include "commands.hpp"

#include "nphdae/compose.hpp"
#include "nphdae/evaluate.hpp"
#include "run_io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <memory>
#include <sstream>

namespace nphdae::cli {

namespace {

using json = nlohmann::json;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Provenance of a dataset: the generating config hash when recorded, else the manifest itself.
std::string dataset_hash(const Dataset& ds) {
  if (ds.manifest.contains("config_sha256")) return ds.manifest.at("config_sha256").get<std::string>();
  return config_hash(ds.manifest);
}

Vector random_differential(const GroundTruthSpec& spec, std::uint64_t seed, std::uint64_t index) {
  std::mt19937_64 rng = stream_rng(seed, index);
  std::uniform_real_distribution<double> init(spec.init_low, spec.init_high);
  Vector vc(spec.capacitance.size()), il(spec.inductance.size());
  for (Index i = 0; i < vc.size(); ++i) vc(i) = init(rng);
  for (Index i = 0; i < il.size(); ++i) il(i) = init(rng);
  return differential_state(spec, vc, il);
}

Vector parse_vector(const std::string& text) {
  std::vector<double> vals;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      vals.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(fmt::format("bad number '{}' in state vector", item));
    }
  }
  return Eigen::Map<const Vector>(vals.data(), static_cast<Index>(vals.size()));
}

}  // namespace

void gen_data(const GenDataOptions& opt) {
  const json& c = opt.config;
  reject_unknown(c, {"system", "seed", "trajectories", "steps", "dt", "noise"}, "gen-data");
  if (!c.contains("system")) throw ConfigError("gen-data needs a system");
  const GroundTruthSpec spec = spec_from_json(c.at("system"));
  GenerateOptions g;
  g.seed = c.value("seed", std::uint64_t{0});
  g.trajectories = c.value("trajectories", Index{30});
  g.steps = c.value("steps", Index{1000});
  g.dt = c.value("dt", spec.dt);
  g.noise_var = c.value("noise", 0.0);
  const json resolved = {{"system", spec_to_json(spec)}, {"seed", g.seed},       {"trajectories", g.trajectories},
                         {"steps", g.steps},             {"dt", g.dt},           {"noise", g.noise_var}};

  Dataset ds = generate_dataset(spec, g);
  ds.manifest["noisy"] = g.noise_var > 0;
  ds.manifest["config_sha256"] = config_hash(resolved);

  const fs::path dir = output_path(opt.out);
  prepare_run_dir(dir, opt.force);
  save_dataset(dir.string(), ds);
  fmt::print("wrote {} {} trajectories of {} steps to {}\n", g.trajectories, spec.name, g.steps, dir.string());
}

void train(const TrainOptions& opt) {
  const fs::path dir = output_path(opt.out);
  const std::string command = opt.baseline ? "train-baseline" : "train";
  json run;
  std::optional<TrainState> resumed;
  if (opt.resume) {
    run = read_json(dir / "config.json");
    if (run.value("command", "") != command)
      throw ConfigError(fmt::format("{} holds a '{}' run", dir.string(), run.value("command", "?")));
    const json ck = read_json(dir / "checkpoint.json");
    if (ck.at("config_sha256") != run.at("config_sha256"))
      throw ConfigError("checkpoint does not belong to this run's config");
    resumed = TrainState::from_json(ck.at("state"));
  } else {
    TrainConfig defaults;
    if (opt.baseline) defaults.lr = 1e-3;
    json given = opt.train;
    // Scaled runs keep the default quarter of the budget in the first phase.
    if (given.contains("epochs") && !given.contains("switch_epoch"))
      given["switch_epoch"] = given.at("epochs").get<int>() / 4;
    json tc = TrainConfig::from_json(given, defaults).to_json();
    tc.erase("threads");
    run = {{"command", command},
           {"data", {{"path", fs::absolute(opt.data).string()}}},
           {"val_trajectories", opt.val_trajectories},
           {"train", tc}};
    if (!opt.val.empty()) run["val"] = {{"path", fs::absolute(opt.val).string()}};
  }
  TrainConfig cfg = TrainConfig::from_json(run.at("train"));
  if (opt.threads) cfg.parallel.threads = *opt.threads;
  cfg.validate();

  const Dataset data = load_dataset(run.at("data").at("path").get<std::string>());
  const GroundTruthSpec spec = spec_of_dataset(data);
  Dataset train_set, val_set;
  if (run.contains("val")) {
    train_set = data;
    val_set = load_dataset(run.at("val").at("path").get<std::string>());
    if (spec_to_json(spec_of_dataset(val_set)) != spec_to_json(spec))
      throw ConfigError("training and validation data come from different systems");
  } else {
    const auto k = static_cast<std::size_t>(run.at("val_trajectories").get<int>());
    if (k == 0 || data.trajectories.size() <= k)
      throw ConfigError(fmt::format("cannot hold out {} of {} trajectories for validation", k, data.trajectories.size()));
    std::tie(train_set, val_set) = data.split(data.trajectories.size() - k);
  }

  if (!resumed) {
    run["data"]["sha256"] = dataset_hash(data);
    if (run.contains("val")) run["val"]["sha256"] = dataset_hash(val_set);
    json hashed = run;
    hashed["data"].erase("path");
    if (hashed.contains("val")) hashed["val"].erase("path");
    run["config_sha256"] = config_hash(hashed);
  }
  const std::string hash = run.at("config_sha256").get<std::string>();

  const SampleSet train_samples = train_set.samples();
  const SampleSet val_samples = subsample(val_set.samples(), cfg.validation_samples);
  const SemiExplicitSystem truth(spec.system());
  const ComponentRelations& rel = truth.system().relations();

  std::unique_ptr<Objective> obj;
  std::optional<NeuralRelations> net;
  std::optional<BlackBoxOde> node;
  Vector theta0;
  if (opt.baseline) {
    node = BlackBoxOde::init(truth.size(), truth.system().matrices().inputs(), cfg.shape, cfg.seed);
    theta0 = node->params();
    obj = std::make_unique<NodeObjective>(*node, truth, cfg.parallel);
  } else {
    net = NeuralRelations::init(rel.resistors(), rel.capacitors(), rel.inductors(), cfg.shape, cfg.seed);
    theta0 = net->params().theta;
    obj = std::make_unique<PhdaeObjective>(truth, *net, cfg.parallel);
  }
  TrainState state = resumed ? *resumed : TrainState{0, theta0, AdamState(theta0.size()), {}, 0, 0};
  if (state.theta.size() != theta0.size()) throw ConfigError("checkpoint parameters do not match the network shape");

  if (!opt.resume) {
    prepare_run_dir(dir, opt.force);
    write_json(dir / "config.json", run);
  }
  struct Stop {};
  auto save = [&](const TrainState& s) {
    write_json(dir / "checkpoint.json", {{"config_sha256", hash}, {"state", s.to_json()}});
    std::ostringstream hist;
    write_history_csv(hist, s.history);
    write_text_atomic(dir / "history.csv", hist.str());
    if (opt.stop_at && s.epoch >= *opt.stop_at && s.epoch < cfg.epochs) throw Stop{};
  };

  const auto t0 = std::chrono::steady_clock::now();
  std::fprintf(stderr, "%s: epochs %d..%d on %ld samples\n", command.c_str(), state.epoch, cfg.epochs,
               static_cast<long>(train_samples.size()));
  try {
    state = fit(*obj, std::move(state), train_samples, val_samples, cfg, save);
  } catch (const Stop&) {
    std::fprintf(stderr, "%s: stopped after a checkpoint; continue with --resume\n", command.c_str());
    return;
  }
  save(state);

  json model = opt.baseline ? node->with_params(state.theta).to_json() : net->with_params(state.theta).to_json();
  model["system"] = spec_to_json(spec);
  model["config_sha256"] = hash;
  model["training"] = {{"command", command}, {"seed", cfg.seed}, {"epochs", state.epoch}};
  write_json(dir / "model.json", model);

  const ValidationMetrics vm = obj->validate(state.theta, val_samples);
  json metrics = {{"config_sha256", hash},
                  {"epochs", state.epoch},
                  {"val_mse", vm.mse},
                  {"val_h_norm_sq", vm.h_norm_sq},
                  {"skipped_updates", state.skipped_updates}};
  if (!state.history.empty()) metrics["final_loss"] = state.history.back().loss;
  write_json(dir / "metrics.json", metrics);
  std::fprintf(stderr, "%s: done in %.1f s, val_mse %g\n", command.c_str(), seconds_since(t0), vm.mse);
  fmt::print("{}\n", (dir / "model.json").string());
}

namespace {

EvalReport run_eval(const LoadedModel& m, const Dataset& ds, const SemiExplicitSystem& truth, Index steps) {
  if (m.kind == "node") return evaluate(node_predictor(*m.node), ds, truth, steps);
  const SemiExplicitSystem se = m.system();
  return evaluate(phdae_predictor(se), ds, truth, steps);
}

void check_same_system(const LoadedModel& m, const GroundTruthSpec& spec, const std::string& what) {
  if (spec_to_json(m.spec) != spec_to_json(spec))
    throw ConfigError(fmt::format("{} was built for {} but the dataset holds {}", what, spec_to_json(m.spec).dump(),
                                  spec_to_json(spec).dump()));
}

}  // namespace

void eval(const EvalOptions& opt) {
  const Dataset ds = load_dataset(opt.data);
  if (ds.empty()) throw ConfigError("evaluation dataset is empty");
  const GroundTruthSpec spec = spec_of_dataset(ds);
  const SemiExplicitSystem truth(spec.system());
  Index steps = opt.steps;
  if (steps < 0) {
    steps = ds.trajectories.front().steps();
    for (const auto& t : ds.trajectories) steps = std::min(steps, t.steps());
  }

  const LoadedModel model = opt.model == "truth" ? truth_model(spec) : load_model(opt.model);
  check_same_system(model, spec, "model");
  std::optional<LoadedModel> baseline;
  if (!opt.baseline.empty()) {
    baseline = load_model(opt.baseline);
    check_same_system(*baseline, spec, "baseline");
  }

  const EvalReport rep = run_eval(model, ds, truth, steps);
  std::optional<EvalReport> base_rep;
  if (baseline) base_rep = run_eval(*baseline, ds, truth, steps);

  const fs::path dir = output_path(opt.out);
  prepare_run_dir(dir, opt.force);
  auto write_csv = [&](const fs::path& p, const EvalReport& r) {
    std::ostringstream os;
    write_eval_csv(os, r);
    write_text_atomic(p, os.str());
  };
  write_csv(dir / "model_metrics.csv", rep);
  json summary = {{"dataset", {{"path", opt.data}, {"sha256", dataset_hash(ds)}}},
                  {"steps", steps},
                  {"model", rep.summary()}};
  summary["model"]["kind"] = model.kind;
  if (opt.model != "truth") summary["model"]["sha256"] = sha256_file(opt.model);
  if (base_rep) {
    write_csv(dir / "baseline_metrics.csv", *base_rep);
    summary["baseline"] = base_rep->summary();
    summary["baseline"]["kind"] = baseline->kind;
    summary["baseline"]["sha256"] = sha256_file(opt.baseline);
    const double ratio = base_rep->median_h() / rep.median_h();
    summary["median_h_ratio"] = std::isfinite(ratio) ? json(ratio) : json(nullptr);
  }
  write_json(dir / "summary.json", summary);
  fmt::print("{}\n", summary.dump(2));
}

namespace {

struct Composite {
  std::vector<GroundTruthSpec> specs;
  std::vector<Subsystem> parts;
  std::vector<Coupling> couplings;
  json entries = json::array();
};

// Entry: {"name", "system", "model", "sha256"}; model paths are relative to `base`.
void add_subsystem(Composite& c, const json& entry, const fs::path& base, bool require_hash) {
  reject_unknown(entry, {"name", "system", "model", "sha256"}, "subsystem");
  json out = json::object();
  out["name"] = entry.value("name", fmt::format("sub{}", c.parts.size()));
  std::optional<LoadedModel> model;
  std::string model_path;
  if (entry.contains("model") && !entry.at("model").is_null()) {
    fs::path p = entry.at("model").get<std::string>();
    if (p.is_relative()) p = base / p;
    model_path = fs::absolute(p).lexically_normal().string();
    const std::string digest = sha256_file(model_path);
    if (entry.contains("sha256") && entry.at("sha256").get<std::string>() != digest)
      throw ConfigError(fmt::format("checksum mismatch for {}", model_path));
    if (require_hash && !entry.contains("sha256")) throw ConfigError(fmt::format("no checksum recorded for {}", model_path));
    model = load_model(model_path);
    if (model->kind == "node") throw ConfigError("black-box models cannot be composed");
    out["model"] = model_path;
    out["sha256"] = digest;
  }
  if (!entry.contains("system") && !model) throw ConfigError("a subsystem needs a system or a model");
  GroundTruthSpec spec = entry.contains("system") ? spec_from_json(entry.at("system")) : model->spec;
  if (model && model->spec.name != spec.name)
    throw ConfigError(fmt::format("model {} was trained on {}, not {}", model_path, model->spec.name, spec.name));
  out["system"] = spec_to_json(spec);
  PhdaeSystem sys = spec.system();
  if (model && model->relations) sys = sys.with_relations(std::make_shared<NeuralRelations>(*model->relations));
  c.parts.push_back({out["name"].get<std::string>(), spec.graph, std::move(sys)});
  c.specs.push_back(std::move(spec));
  c.entries.push_back(std::move(out));
}

Composite build_composite(const json& cfg, const fs::path& base, bool require_hash) {
  reject_unknown(cfg, {"kind", "subsystems", "couplings", "complete_graph", "allow_internal", "a_lambda_shape",
                       "state_dim", "differential", "algebraic", "config_sha256"},
                 "composite");
  Composite c;
  if (cfg.contains("complete_graph")) {
    if (cfg.contains("subsystems") || cfg.contains("couplings"))
      throw ConfigError("complete_graph replaces subsystems and couplings");
    const json& g = cfg.at("complete_graph");
    reject_unknown(g, {"units", "unit", "line", "unit_node", "line_in", "line_out"}, "complete_graph");
    const auto n = g.at("units").get<std::size_t>();
    if (n < 2) throw ConfigError("a complete graph needs at least two units");
    for (std::size_t i = 0; i < n; ++i) {
      json e = g.at("unit");
      e["name"] = fmt::format("unit{}", i);
      add_subsystem(c, e, base, false);
    }
    // A line given by seed gets seed + k for the k-th line.
    for (std::size_t k = 0; k < n * (n - 1) / 2; ++k) {
      json e = g.at("line");
      e["name"] = fmt::format("line{}", k);
      if (e.contains("system") && e["system"].is_object() && e["system"].contains("seed"))
        e["system"]["seed"] = e["system"]["seed"].get<std::uint64_t>() + k;
      add_subsystem(c, e, base, false);
    }
    c.couplings = complete_graph_couplings(n, g.value("unit_node", Index{3}), g.value("line_in", Index{1}),
                                           g.value("line_out", Index{3}));
  } else {
    if (!cfg.contains("subsystems") || !cfg.at("subsystems").is_array() || cfg.at("subsystems").empty())
      throw ConfigError("composite config needs a non-empty subsystems list");
    for (const json& e : cfg.at("subsystems")) add_subsystem(c, e, base, require_hash);
    c.couplings = couplings_from_json(cfg.value("couplings", json::array()));
  }
  return c;
}

}  // namespace

void compose(const ComposeOptions& opt) {
  const json cfg = read_json(opt.config);
  const fs::path base = fs::path(opt.config).parent_path();
  const Composite c = build_composite(cfg, base, false);
  const bool allow_internal = cfg.value("allow_internal", false);

  const CompositeSystem cs(c.parts);
  const Eigen::MatrixXi a = interconnection(cs, c.couplings);
  const SemiExplicitSystem se(nphdae::compose(cs, a, allow_internal));

  json manifest = {{"kind", "composite"},
                   {"subsystems", c.entries},
                   {"couplings", to_json(c.couplings)},
                   {"allow_internal", allow_internal}};
  json hashed = manifest;
  for (auto& e : hashed["subsystems"]) e.erase("model");
  manifest["config_sha256"] = config_hash(hashed);
  manifest["a_lambda_shape"] = {a.rows(), a.cols()};
  manifest["state_dim"] = se.size();
  manifest["differential"] = se.differential();
  manifest["algebraic"] = se.algebraic();

  const fs::path dir = output_path(opt.out);
  prepare_run_dir(dir, opt.force);
  write_json(dir / "composite.json", manifest);
  fmt::print("composite of {} subsystems, A_lambda {}x{}, state {} ({} differential)\n", c.parts.size(), a.rows(),
             a.cols(), se.size(), se.differential());
}

void simulate(const SimulateOptions& opt) {
  if (opt.model.empty() == opt.system.empty()) throw ConfigError("give exactly one of --model and --system");
  if (opt.steps < 0) throw ConfigError("steps must be non-negative");
  const Index steps = opt.steps;

  std::optional<SemiExplicitSystem> se;
  std::optional<LoadedModel> single;
  Vector v0;
  Vector w_guess;
  double dt = opt.dt;

  json file;
  if (!opt.model.empty()) file = read_json(opt.model);
  if (file.is_object() && file.value("kind", "") == "composite") {
    const Composite c = build_composite(file, fs::path(opt.model).parent_path(), true);
    const CompositeSystem cs(c.parts);
    const Eigen::MatrixXi a = interconnection(cs, c.couplings);
    se.emplace(nphdae::compose(cs, a, file.value("allow_internal", false)));
    std::vector<Vector> states;
    for (std::size_t k = 0; k < c.parts.size(); ++k) {
      const SemiExplicitSystem sub(c.specs[k].system());
      Vector x = Vector::Zero(sub.size());
      x.head(sub.differential()) = random_differential(c.specs[k], opt.init_seed, k);
      states.push_back(x);
    }
    const Vector x = cs.embed(states, a.cols());
    v0 = x.head(se->differential());
    w_guess = x.tail(se->algebraic());
    if (dt == 0.0) dt = c.specs.front().dt;
  } else {
    single = opt.model.empty() ? truth_model(spec_from_json(json(opt.system))) : load_model(opt.model);
    const SemiExplicitSystem truth = single->truth();
    v0 = random_differential(single->spec, opt.init_seed, 0);
    if (single->kind != "node") se.emplace(single->system());
    if (dt == 0.0) dt = single->spec.dt;
  }
  if (!opt.x0.empty()) {
    const Vector given = parse_vector(opt.x0);
    if (given.size() != v0.size())
      throw ConfigError(fmt::format("--x0 needs {} differential values, got {}", v0.size(), given.size()));
    v0 = given;
  }
  if (!(dt > 0)) throw ConfigError("dt must be positive");

  Trajectory traj;
  if (single && single->kind == "node") {
    const SemiExplicitSystem truth = single->truth();
    const Vector u = truth.system().sources().at(0.0);
    const Vector x0 = truth.join(v0, truth.consistent_init(v0, Vector::Zero(truth.algebraic()), u));
    const BlackBoxOde& m = *single->node;
    traj = rollout([&](const Array& x, const Array& uu, double) { return m.field(x, uu); },
                   inputs_of(truth.system()), x0, 0.0, steps, dt);
  } else {
    const Vector u = se->system().sources().at(0.0);
    if (w_guess.size() == 0) {
      // Start the model's Newton solve from the ground-truth algebraic state.
      const SemiExplicitSystem truth = single->truth();
      w_guess = truth.consistent_init(v0, Vector::Zero(truth.algebraic()), u);
    }
    traj = rollout(*se, se->join(v0, se->consistent_init(v0, w_guess, u)), 0.0, steps, dt);
  }

  const fs::path out = output_path(opt.out);
  prepare_output_file(out, opt.force);
  std::ostringstream os;
  write_trajectory_csv(os, traj);
  write_text_atomic(out, os.str());
  fmt::print("wrote {} steps of a {}-state trajectory to {}\n", steps, traj.state_dim(), out.string());
}

}  // namespace nphdae::cli
