#pragma once

#include "nphdae/simulate.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace nphdae {

// One-step supervision tuples (x_k, u_k, x_{k+1}) stored column-wise.
struct SampleSet {
  Array x;
  Array u;
  Array y;
  double dt = 0.0;

  Index size() const { return x.cols(); }
  SampleSet select(const std::vector<Index>& cols) const;
};

struct Dataset {
  std::vector<Trajectory> trajectories;
  nlohmann::json manifest = nlohmann::json::object();

  bool empty() const { return trajectories.empty(); }
  Index state_dim() const;
  Index input_dim() const;
  double dt() const;
  Index sample_count() const;
  SampleSet samples() const;
  // First `count` trajectories and the rest.
  std::pair<Dataset, Dataset> split(std::size_t count) const;
};

// Directory with manifest.json and traj_000.csv, traj_001.csv, ...
void save_dataset(const std::string& dir, const Dataset& ds);
Dataset load_dataset(const std::string& dir);

}  // namespace nphdae
