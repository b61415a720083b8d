#include "commands.hpp"
#include "nphdae/errors.hpp"
#include "run_io.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>

using json = nlohmann::json;

namespace {

constexpr int kConfigExit = 2;
constexpr int kNumericalExit = 3;
constexpr int kIoExit = 4;

// Config file values first, then any flag given on the command line.
json load_config(const std::string& file) {
  if (file.empty()) return json::object();
  json j = nphdae::cli::read_json(file);
  if (!j.is_object()) throw nphdae::ConfigError(file + ": config must be a JSON object");
  return j;
}

template <class T>
void set_if(json& j, const CLI::Option* opt, const char* key, const T& value) {
  if (opt->count() > 0) j[key] = value;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural port-Hamiltonian DAE models of electrical circuits"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Simulate a ground-truth system into a dataset directory");
  std::string gen_config, gen_system, gen_out;
  std::uint64_t gen_seed = 0;
  long gen_traj = 0, gen_steps = 0;
  double gen_dt = 0, gen_noise = 0;
  bool gen_force = false;
  gen->add_option("--config", gen_config, "JSON config (system, seed, trajectories, steps, dt, noise)");
  auto* o_system = gen->add_option("--system", gen_system, "fhn or dgu");
  auto* o_seed = gen->add_option("--seed", gen_seed);
  auto* o_traj = gen->add_option("--trajectories", gen_traj, "default 30");
  auto* o_steps = gen->add_option("--steps", gen_steps, "default 1000");
  auto* o_dt = gen->add_option("--dt", gen_dt, "default per system (fhn 0.1, dgu 0.01)");
  auto* o_noise = gen->add_option("--noise", gen_noise, "observation noise variance");
  gen->add_option("--out", gen_out, "dataset directory")->required();
  gen->add_flag("--force", gen_force, "clear an existing directory");

  // train / train-baseline share their flags
  struct TrainFlags {
    std::string config, data, val, out, activation;
    int val_trajectories = 4, threads = 1, stop_at = 0, epochs = 0, switch_epoch = 0, bpe = 0, log_every = 0, checkpoint_every = 0;
    long batch = 0, chunk = 0;
    double lr = 0;
    std::uint64_t seed = 0;
    bool resume = false, force = false;
    std::vector<long> hidden;
    CLI::Option *o_epochs, *o_switch, *o_batch, *o_bpe, *o_lr, *o_seed, *o_hidden, *o_act, *o_log, *o_ck, *o_chunk,
        *o_threads, *o_stop;
  };
  TrainFlags tf, bf;
  auto add_train = [](CLI::App* sub, TrainFlags& f) {
    sub->add_option("--data", f.data, "training dataset directory");
    sub->add_option("--val", f.val, "validation dataset directory (default: hold out part of --data)");
    sub->add_option("--val-trajectories", f.val_trajectories, "trajectories held out when --val is absent");
    sub->add_option("--config", f.config, "JSON training config");
    f.o_epochs = sub->add_option("--epochs", f.epochs);
    f.o_switch = sub->add_option("--switch", f.switch_epoch, "epoch at which the loss weights change");
    f.o_batch = sub->add_option("--batch-size", f.batch);
    f.o_bpe = sub->add_option("--batches-per-epoch", f.bpe, "0 = full pass");
    f.o_lr = sub->add_option("--lr", f.lr);
    f.o_seed = sub->add_option("--seed", f.seed);
    f.o_hidden = sub->add_option("--hidden", f.hidden, "hidden widths, e.g. --hidden 100 100")->expected(1, -1);
    f.o_act = sub->add_option("--activation", f.activation, "relu or tanh");
    f.o_log = sub->add_option("--log-every", f.log_every);
    f.o_ck = sub->add_option("--checkpoint-every", f.checkpoint_every);
    f.o_chunk = sub->add_option("--chunk", f.chunk, "samples per worker chunk (0 = whole batch)");
    f.o_threads = sub->add_option("--threads", f.threads, "worker threads (default 1)");
    sub->add_option("--out", f.out, "run directory")->required();
    f.o_stop = sub->add_option("--stop-at", f.stop_at, "stop at the first checkpoint at or past this epoch");
    sub->add_flag("--resume", f.resume, "continue from the run directory's checkpoint");
    sub->add_flag("--force", f.force, "clear an existing run directory");
  };
  auto* tr = app.add_subcommand("train", "Train N-PHDAE component relations");
  add_train(tr, tf);
  auto* tb = app.add_subcommand("train-baseline", "Train the black-box neural ODE baseline");
  add_train(tb, bf);

  // eval
  auto* ev = app.add_subcommand("eval", "Roll out models over a dataset and score them");
  nphdae::cli::EvalOptions eo;
  ev->add_option("--model", eo.model, "model file, or 'truth' for the ground-truth relations")->required();
  ev->add_option("--baseline", eo.baseline, "second model to compare against");
  ev->add_option("--data", eo.data, "dataset directory")->required();
  ev->add_option("--steps", eo.steps, "rollout length (default: full trajectories)");
  ev->add_option("--out", eo.out, "output directory")->required();
  ev->add_flag("--force", eo.force);

  // compose
  auto* co = app.add_subcommand("compose", "Couple subsystem models into a composite model file");
  nphdae::cli::ComposeOptions cop;
  co->add_option("--config", cop.config, "composite JSON config")->required();
  co->add_option("--out", cop.out, "output directory")->required();
  co->add_flag("--force", cop.force);

  // simulate
  auto* si = app.add_subcommand("simulate", "Roll out a model, composite or ground-truth system");
  nphdae::cli::SimulateOptions so;
  si->add_option("--model", so.model, "model or composite file");
  si->add_option("--system", so.system, "ground-truth system name");
  si->add_option("--x0", so.x0, "comma-separated differential initial state");
  si->add_option("--init-seed", so.init_seed, "seed for a random initial state");
  si->add_option("--steps", so.steps);
  si->add_option("--dt", so.dt);
  si->add_option("--out", so.out, "trajectory CSV")->required();
  si->add_flag("--force", so.force);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigExit;
  }

  try {
    if (*gen) {
      json c = load_config(gen_config);
      set_if(c, o_system, "system", gen_system);
      set_if(c, o_seed, "seed", gen_seed);
      set_if(c, o_traj, "trajectories", gen_traj);
      set_if(c, o_steps, "steps", gen_steps);
      set_if(c, o_dt, "dt", gen_dt);
      set_if(c, o_noise, "noise", gen_noise);
      nphdae::cli::gen_data({c, gen_out, gen_force});
    } else if (*tr || *tb) {
      TrainFlags& f = *tr ? tf : bf;
      nphdae::cli::TrainOptions t;
      t.baseline = bool(*tb);
      t.data = f.data;
      t.val = f.val;
      t.val_trajectories = f.val_trajectories;
      t.out = f.out;
      t.resume = f.resume;
      t.force = f.force;
      if (f.o_threads->count() > 0) t.threads = f.threads;
      if (f.o_stop->count() > 0) t.stop_at = f.stop_at;
      if (!f.resume) {
        if (f.data.empty()) throw nphdae::ConfigError("--data is required");
        json c = load_config(f.config);
        set_if(c, f.o_epochs, "epochs", f.epochs);
        set_if(c, f.o_switch, "switch_epoch", f.switch_epoch);
        set_if(c, f.o_batch, "batch_size", f.batch);
        set_if(c, f.o_bpe, "batches_per_epoch", f.bpe);
        set_if(c, f.o_lr, "lr", f.lr);
        set_if(c, f.o_seed, "seed", f.seed);
        set_if(c, f.o_hidden, "hidden", f.hidden);
        set_if(c, f.o_act, "activation", f.activation);
        set_if(c, f.o_log, "log_every", f.log_every);
        set_if(c, f.o_ck, "checkpoint_every", f.checkpoint_every);
        set_if(c, f.o_chunk, "chunk", f.chunk);
        t.train = c;
      }
      nphdae::cli::train(t);
    } else if (*ev) {
      nphdae::cli::eval(eo);
    } else if (*co) {
      nphdae::cli::compose(cop);
    } else if (*si) {
      nphdae::cli::simulate(so);
    }
  } catch (const nphdae::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kConfigExit;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "error: bad configuration: %s\n", e.what());
    return kConfigExit;
  } catch (const nphdae::NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kNumericalExit;
  } catch (const nphdae::IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kIoExit;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kIoExit;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
