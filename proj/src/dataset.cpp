#include "nphdae/dataset.hpp"

#include <fmt/format.h>

#include <filesystem>
#include <fstream>

namespace nphdae {

namespace fs = std::filesystem;

SampleSet SampleSet::select(const std::vector<Index>& cols) const {
  SampleSet s;
  s.dt = dt;
  s.x.resize(x.rows(), static_cast<Index>(cols.size()));
  s.u.resize(u.rows(), static_cast<Index>(cols.size()));
  s.y.resize(y.rows(), static_cast<Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) {
    const Index c = cols[i];
    s.x.col(static_cast<Index>(i)) = x.col(c);
    s.u.col(static_cast<Index>(i)) = u.col(c);
    s.y.col(static_cast<Index>(i)) = y.col(c);
  }
  return s;
}

Index Dataset::state_dim() const { return trajectories.empty() ? 0 : trajectories.front().state_dim(); }
Index Dataset::input_dim() const { return trajectories.empty() ? 0 : trajectories.front().input_dim(); }
double Dataset::dt() const { return trajectories.empty() ? 0.0 : trajectories.front().dt(); }

Index Dataset::sample_count() const {
  Index n = 0;
  for (const auto& t : trajectories) n += std::max<Index>(0, t.steps());
  return n;
}

SampleSet Dataset::samples() const {
  SampleSet s;
  s.dt = dt();
  const Index total = sample_count();
  s.x.resize(state_dim(), total);
  s.u.resize(input_dim(), total);
  s.y.resize(state_dim(), total);
  Index at = 0;
  for (const auto& t : trajectories) {
    if (t.state_dim() != state_dim() || t.input_dim() != input_dim()) {
      throw StructureError("dataset trajectories have inconsistent dimensions");
    }
    const Index k = t.steps();
    if (k <= 0) continue;
    s.x.middleCols(at, k) = t.states.leftCols(k).array();
    s.u.middleCols(at, k) = t.inputs.leftCols(k).array();
    s.y.middleCols(at, k) = t.states.middleCols(1, k).array();
    at += k;
  }
  return s;
}

std::pair<Dataset, Dataset> Dataset::split(std::size_t count) const {
  Dataset a, b;
  a.manifest = b.manifest = manifest;
  for (std::size_t i = 0; i < trajectories.size(); ++i) (i < count ? a : b).trajectories.push_back(trajectories[i]);
  return {a, b};
}

void save_dataset(const std::string& dir, const Dataset& ds) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(fmt::format("cannot create {}: {}", dir, ec.message()));
  nlohmann::json manifest = ds.manifest;
  nlohmann::json files = nlohmann::json::array();
  for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
    const std::string name = fmt::format("traj_{:03d}.csv", i);
    write_trajectory_csv((fs::path(dir) / name).string(), ds.trajectories[i]);
    files.push_back(name);
  }
  manifest["files"] = files;
  std::ofstream os(fs::path(dir) / "manifest.json", std::ios::binary);
  if (!os) throw IoError("cannot write manifest in " + dir);
  os << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::string& dir) {
  const fs::path mpath = fs::path(dir) / "manifest.json";
  std::ifstream is(mpath, std::ios::binary);
  if (!is) throw IoError("missing " + mpath.string());
  Dataset ds;
  try {
    ds.manifest = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(fmt::format("{}: {}", mpath.string(), e.what()));
  }
  if (!ds.manifest.contains("files") || !ds.manifest["files"].is_array()) {
    throw IoError(mpath.string() + ": no file list");
  }
  for (const auto& f : ds.manifest["files"]) {
    ds.trajectories.push_back(read_trajectory_csv((fs::path(dir) / f.get<std::string>()).string()));
  }
  ds.manifest.erase("files");
  return ds;
}

}  // namespace nphdae
