#include "run_io.hpp"

#include <fmt/format.h>
#include <openssl/evp.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace nphdae::cli {

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw IoError("SHA-256 computation failed");
  std::string out;
  for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", md[i]);
  return out;
}

std::string sha256_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(fmt::format("cannot read {}", path.string()));
  std::ostringstream ss;
  ss << is.rdbuf();
  return sha256_hex(ss.str());
}

std::string config_hash(const nlohmann::json& j) { return sha256_hex(j.dump()); }

fs::path output_path(const std::string& out) {
  fs::path p(out);
  if (p.is_relative()) {
    if (const char* root = std::getenv("NPHDAE_OUTPUT_ROOT"); root && *root) return fs::path(root) / p;
  }
  return p;
}

void prepare_run_dir(const fs::path& dir, bool force) {
  std::error_code ec;
  if (fs::exists(dir, ec)) {
    if (!fs::is_directory(dir)) throw IoError(fmt::format("{} exists and is not a directory", dir.string()));
    if (!fs::is_empty(dir)) {
      if (!force) throw IoError(fmt::format("{} is not empty (use a new directory or --force)", dir.string()));
      for (const auto& entry : fs::directory_iterator(dir)) fs::remove_all(entry.path(), ec);
      if (ec) throw IoError(fmt::format("cannot clear {}: {}", dir.string(), ec.message()));
    }
    return;
  }
  fs::create_directories(dir, ec);
  if (ec) throw IoError(fmt::format("cannot create {}: {}", dir.string(), ec.message()));
}

void prepare_output_file(const fs::path& file, bool force) {
  if (fs::exists(file) && !force) throw IoError(fmt::format("{} exists (use --force to overwrite)", file.string()));
  if (file.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(file.parent_path(), ec);
    if (ec) throw IoError(fmt::format("cannot create {}: {}", file.parent_path().string(), ec.message()));
  }
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(fmt::format("cannot read {}", path.string()));
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError(fmt::format("cannot write {}", tmp.string()));
    os << text;
    if (!os) throw IoError(fmt::format("write to {} failed", tmp.string()));
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError(fmt::format("cannot move {} into place: {}", path.string(), ec.message()));
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text_atomic(path, j.dump(2) + "\n"); }

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys, const char* what) {
  for (const auto& [key, v] : j.items()) {
    bool ok = false;
    for (const char* k : keys) ok = ok || key == k;
    if (!ok) throw ConfigError(fmt::format("unknown {} key '{}'", what, key));
  }
}

namespace {

double param_or(const nlohmann::json& p, const char* key, double fallback) {
  return p.contains(key) ? p.at(key).get<double>() : fallback;
}

}  // namespace

GroundTruthSpec spec_from_json(const nlohmann::json& j) {
  try {
    if (j.is_string()) {
      if (j.get<std::string>() == "tl") throw ConfigError("a transmission line needs parameters or a seed");
      return system_by_name(j.get<std::string>());
    }
    if (!j.is_object()) throw ConfigError("system must be a name or an object");
    reject_unknown(j, {"name", "parameters", "seed"}, "system");
    const std::string name = j.at("name").get<std::string>();
    const nlohmann::json p = j.value("parameters", nlohmann::json::object());
    if (!p.is_object()) throw ConfigError("system parameters must be an object");
    if (j.contains("seed") && name != "tl") throw ConfigError("only transmission lines take a seed");
    if (name == "fhn") {
      GroundTruthSpec s = fhn_system();
      for (const auto& [key, v] : p.items()) {
        if (!s.parameters.contains(key)) throw ConfigError(fmt::format("unknown fhn parameter '{}'", key));
        if (s.parameters.at(key) != v) throw ConfigError("the FitzHugh-Nagumo parameters are fixed");
      }
      return s;
    }
    if (name == "dgu") {
      reject_unknown(p, {"R", "L", "C", "i", "v"}, "dgu parameter");
      return dgu_system(param_or(p, "R", 1.2), param_or(p, "L", 1.8), param_or(p, "C", 2.2), param_or(p, "i", 0.1),
                        param_or(p, "v", 1.0));
    }
    if (name == "tl") {
      reject_unknown(p, {"R", "L"}, "tl parameter");
      if (j.contains("seed")) {
        if (!p.empty()) throw ConfigError("give either a seed or parameters for a transmission line");
        return tl_system_random(j.at("seed").get<std::uint64_t>());
      }
      return tl_system(p.at("R").get<double>(), p.at("L").get<double>());
    }
    throw ConfigError(fmt::format("unknown system '{}' (expected fhn, dgu or tl)", name));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("bad system description: {}", e.what()));
  }
}

nlohmann::json spec_to_json(const GroundTruthSpec& spec) { return {{"name", spec.name}, {"parameters", spec.parameters}}; }

GroundTruthSpec spec_of_dataset(const Dataset& ds) {
  if (!ds.manifest.contains("system")) throw ConfigError("dataset manifest does not name its system");
  return spec_from_json({{"name", ds.manifest.at("system")},
                         {"parameters", ds.manifest.value("parameters", nlohmann::json::object())}});
}

SemiExplicitSystem LoadedModel::system() const {
  if (kind == "node") throw ConfigError("a black-box model has no circuit form");
  const SemiExplicitSystem se = truth();
  if (kind == "truth") return se;
  return se.with_relations(std::make_shared<NeuralRelations>(*relations));
}

LoadedModel truth_model(GroundTruthSpec spec) { return {"truth", std::move(spec), std::nullopt, std::nullopt}; }

LoadedModel load_model(const fs::path& path) {
  const nlohmann::json j = read_json(path);
  if (!j.is_object() || !j.contains("kind") || !j.contains("system"))
    throw ConfigError(fmt::format("{} is not a model file", path.string()));
  const std::string kind = j.at("kind").get<std::string>();
  LoadedModel m{kind, spec_from_json(j.at("system")), std::nullopt, std::nullopt};
  const SemiExplicitSystem se = m.truth();
  if (kind == "nphdae") {
    m.relations = NeuralRelations::from_json(j);
    const auto& rel = *m.relations;
    const auto& t = se.system().relations();
    if (rel.resistors() != t.resistors() || rel.capacitors() != t.capacitors() || rel.inductors() != t.inductors())
      throw StructureError(fmt::format("{}: networks do not fit the {} circuit", path.string(), m.spec.name));
  } else if (kind == "node") {
    m.node = BlackBoxOde::from_json(j);
    if (m.node->states() != se.size() || m.node->inputs() != se.system().matrices().inputs())
      throw StructureError(fmt::format("{}: black-box dimensions do not fit the {} system", path.string(), m.spec.name));
  } else if (kind != "truth") {
    throw ConfigError(fmt::format("{}: unknown model kind '{}'", path.string(), kind));
  }
  return m;
}

}  // namespace nphdae::cli
