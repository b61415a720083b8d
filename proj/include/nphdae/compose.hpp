#pragma once

#include "nphdae/assembly.hpp"
#include "nphdae/topology.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace nphdae {

struct Subsystem {
  std::string name;
  CircuitGraph graph;
  PhdaeSystem system;
};

// Subsystems stacked without coupling: every incidence family becomes
// block diagonal, so the composite state is kind-major (all q_C, all phi_L,
// all e, all j_V) with subsystems in declaration order inside each block.
class CompositeSystem {
 public:
  explicit CompositeSystem(std::vector<Subsystem> parts);

  const std::vector<Subsystem>& parts() const { return parts_; }
  std::size_t size() const { return parts_.size(); }
  const IncidenceSet& incidences() const { return inc_; }
  std::shared_ptr<const ComponentRelations> relations() const { return relations_; }
  const SourceSignal& sources() const { return sources_; }
  Index node_rows() const { return inc_.node_rows(); }  // n_vc

  // Row of subsystem `sub`'s node `node` among the composite node rows.
  Index node_row(std::size_t sub, Index node) const;
  Index node_offset(std::size_t sub) const { return node_offset_[sub]; }
  std::size_t owner_of_row(Index row) const;

  PhdaeSystem system() const { return system(Eigen::MatrixXi(node_rows(), 0)); }
  PhdaeSystem system(const Eigen::MatrixXi& coupling) const;

  // Composite state with `n_lambda` trailing coupling currents from per-subsystem states.
  Vector embed(const std::vector<Vector>& states, Index n_lambda = 0) const;
  std::vector<Vector> extract(const Vector& x) const;

 private:
  std::vector<Subsystem> parts_;
  IncidenceSet inc_;
  std::shared_ptr<const ComponentRelations> relations_;
  SourceSignal sources_;
  std::vector<Index> node_offset_;
};

// Coupling edge (zero-voltage source) between node_a of sub_a and node_b of sub_b;
// its current leaves sub_a's node.
struct Coupling {
  std::size_t sub_a = 0;
  Index node_a = 0;
  std::size_t sub_b = 0;
  Index node_b = 0;
};

std::vector<Coupling> couplings_from_json(const nlohmann::json& j);
nlohmann::json to_json(const std::vector<Coupling>& couplings);

Eigen::MatrixXi interconnection(const CompositeSystem& cs, const std::vector<Coupling>& couplings);

// Throws ConfigError on entries outside {-1, 0, 1}, columns without exactly one
// +1 and one -1, or (unless allowed) a column inside a single subsystem.
void validate_interconnection(const CompositeSystem& cs, const Eigen::MatrixXi& a_lambda, bool allow_internal = false);

PhdaeSystem compose(const CompositeSystem& cs, const Eigen::MatrixXi& a_lambda, bool allow_internal = false);

// n units (subsystems 0..n-1) joined pairwise by n(n-1)/2 lines (subsystems n..),
// line k between units i < j: (i, unit_node) -> (line, line_in), (line, line_out) -> (j, unit_node).
std::vector<Coupling> complete_graph_couplings(std::size_t units, Index unit_node, Index line_in, Index line_out);

// Single circuit with the coupled nodes merged and one shared ground. Edge ids
// keep the subsystem order within each kind. `node_map[sub][node]` gives the merged node.
struct MergedCircuit {
  CircuitGraph graph;
  std::vector<std::vector<Index>> node_map;
};
MergedCircuit merge_circuits(const std::vector<Subsystem>& parts, const std::vector<Coupling>& couplings);

}  // namespace nphdae
