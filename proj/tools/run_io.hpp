#pragma once

#include "nphdae/baseline.hpp"
#include "nphdae/systems.hpp"

#include <json.hpp>

#include <filesystem>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>

namespace nphdae::cli {

namespace fs = std::filesystem;

std::string sha256_hex(std::string_view data);
std::string sha256_file(const fs::path& path);
// Hash of the compact dump; object keys are sorted so equal configs hash equally.
std::string config_hash(const nlohmann::json& j);

// Relative paths are placed under $NPHDAE_OUTPUT_ROOT when it is set.
fs::path output_path(const std::string& out);

// Creates `dir`; an existing non-empty directory is an error unless `force`,
// in which case its contents are removed.
void prepare_run_dir(const fs::path& dir, bool force);
void prepare_output_file(const fs::path& file, bool force);

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys, const char* what);

nlohmann::json read_json(const fs::path& path);
void write_json(const fs::path& path, const nlohmann::json& j);
// Writes to a sibling temporary and renames it over `path`.
void write_text_atomic(const fs::path& path, const std::string& text);

// "fhn", {"name": "dgu", "parameters": {...}}, {"name": "tl", "seed": 3}
GroundTruthSpec spec_from_json(const nlohmann::json& j);
nlohmann::json spec_to_json(const GroundTruthSpec& spec);
// System description recorded in a dataset manifest.
GroundTruthSpec spec_of_dataset(const Dataset& ds);

// A model file: trained N-PHDAE relations, a black-box ODE, or the ground truth.
struct LoadedModel {
  std::string kind;
  GroundTruthSpec spec;
  std::optional<NeuralRelations> relations;
  std::optional<BlackBoxOde> node;

  SemiExplicitSystem truth() const { return SemiExplicitSystem(spec.system()); }
  // Ground-truth topology and sources with the model's relations (nphdae or truth only).
  SemiExplicitSystem system() const;
};

LoadedModel load_model(const fs::path& path);
LoadedModel truth_model(GroundTruthSpec spec);

}  // namespace nphdae::cli
