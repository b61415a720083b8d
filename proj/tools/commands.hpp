#pragma once

#include <json.hpp>

#include <optional>
#include <string>

namespace nphdae::cli {

struct GenDataOptions {
  nlohmann::json config = nlohmann::json::object();  // system, seed, trajectories, steps, dt, noise
  std::string out;
  bool force = false;
};

struct TrainOptions {
  bool baseline = false;
  std::string data;
  std::string val;          // empty: hold out the last val_trajectories of data
  int val_trajectories = 4;
  nlohmann::json train = nlohmann::json::object();  // TrainConfig keys
  std::string out;
  bool resume = false;
  bool force = false;
  std::optional<int> threads;
  std::optional<int> stop_at;  // end the process at the first checkpoint at or past this epoch
};

struct EvalOptions {
  std::string model;  // model file or "truth"
  std::string baseline;
  std::string data;
  long steps = -1;  // -1: the full dataset horizon
  std::string out;
  bool force = false;
};

struct ComposeOptions {
  std::string config;
  std::string out;
  bool force = false;
};

struct SimulateOptions {
  std::string model;   // model or composite file
  std::string system;  // ground truth by name instead of a model
  std::string x0;      // comma separated differential state
  std::uint64_t init_seed = 0;
  long steps = 1000;
  double dt = 0.0;  // 0: the system default
  std::string out;
  bool force = false;
};

void gen_data(const GenDataOptions& opt);
void train(const TrainOptions& opt);
void eval(const EvalOptions& opt);
void compose(const ComposeOptions& opt);
void simulate(const SimulateOptions& opt);

}  // namespace nphdae::cli
