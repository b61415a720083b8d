#include "nphdae/topology.hpp"

#include <fmt/format.h>

#include <algorithm>

namespace nphdae {

char kind_code(ComponentKind kind) {
  switch (kind) {
    case ComponentKind::Capacitor: return 'C';
    case ComponentKind::Resistor: return 'R';
    case ComponentKind::Inductor: return 'L';
    case ComponentKind::VoltageSource: return 'V';
    case ComponentKind::CurrentSource: return 'I';
  }
  return '?';
}

ComponentKind parse_kind(std::string_view code) {
  if (code == "C") return ComponentKind::Capacitor;
  if (code == "R") return ComponentKind::Resistor;
  if (code == "L") return ComponentKind::Inductor;
  if (code == "V") return ComponentKind::VoltageSource;
  if (code == "I") return ComponentKind::CurrentSource;
  throw ConfigError(fmt::format("unknown component kind '{}' (expected C, R, L, V or I)", code));
}

CircuitGraph::CircuitGraph(Index node_count, Index ground, std::vector<Edge> edges)
    : node_count_(node_count), ground_(ground), edges_(std::move(edges)) {
  if (node_count_ < 2) {
    throw StructureError("circuit needs at least one non-ground node");
  }
  if (ground_ < 0 || ground_ >= node_count_) {
    throw StructureError(fmt::format("ground node {} outside [0, {})", ground_, node_count_));
  }
  std::array<std::vector<Index>, 5> ids;
  for (const Edge& e : edges_) {
    if (e.from < 0 || e.from >= node_count_ || e.to < 0 || e.to >= node_count_) {
      throw StructureError(fmt::format("edge {}{} references a node outside [0, {})",
                                       kind_code(e.kind), e.id, node_count_));
    }
    if (e.from == e.to) {
      throw StructureError(fmt::format("edge {}{} is a self-loop on node {}", kind_code(e.kind),
                                       e.id, e.from));
    }
    ids[static_cast<int>(e.kind)].push_back(e.id);
  }
  for (ComponentKind kind : kAllKinds) {
    auto& v = ids[static_cast<int>(kind)];
    std::sort(v.begin(), v.end());
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (k > 0 && v[k] == v[k - 1]) {
        throw StructureError(fmt::format("duplicate edge id {}{}", kind_code(kind), v[k]));
      }
      if (v[k] != static_cast<Index>(k)) {
        throw StructureError(fmt::format("edge ids of kind {} must be contiguous from 0",
                                         kind_code(kind)));
      }
    }
  }
}

Index CircuitGraph::count(ComponentKind kind) const {
  return static_cast<Index>(
      std::count_if(edges_.begin(), edges_.end(), [&](const Edge& e) { return e.kind == kind; }));
}

Index CircuitGraph::row_of(Index node) const {
  if (node == ground_) return -1;
  return node < ground_ ? node : node - 1;
}

Index CircuitGraph::node_of_row(Index row) const { return row < ground_ ? row : row + 1; }

CircuitGraph CircuitGraph::from_json(const nlohmann::json& j) {
  try {
    for (const auto& [key, _] : j.items()) {
      if (key != "nodes" && key != "ground" && key != "edges") {
        throw ConfigError(fmt::format("unknown circuit key '{}'", key));
      }
    }
    std::vector<Edge> edges;
    for (const auto& e : j.at("edges")) {
      for (const auto& [key, _] : e.items()) {
        if (key != "id" && key != "kind" && key != "from" && key != "to") {
          throw ConfigError(fmt::format("unknown edge key '{}'", key));
        }
      }
      edges.push_back(Edge{e.at("id").get<Index>(), parse_kind(e.at("kind").get<std::string>()),
                           e.at("from").get<Index>(), e.at("to").get<Index>()});
    }
    return CircuitGraph(j.at("nodes").get<Index>(), j.value("ground", Index{0}), std::move(edges));
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(fmt::format("malformed circuit description: {}", ex.what()));
  }
}

nlohmann::json CircuitGraph::to_json() const {
  nlohmann::json edges = nlohmann::json::array();
  for (const Edge& e : edges_) {
    edges.push_back({{"id", e.id},
                     {"kind", std::string(1, kind_code(e.kind))},
                     {"from", e.from},
                     {"to", e.to}});
  }
  return {{"nodes", node_count_}, {"ground", ground_}, {"edges", std::move(edges)}};
}

const Eigen::MatrixXi& IncidenceSet::of(ComponentKind kind) const {
  switch (kind) {
    case ComponentKind::Capacitor: return capacitor;
    case ComponentKind::Resistor: return resistor;
    case ComponentKind::Inductor: return inductor;
    case ComponentKind::VoltageSource: return voltage;
    case ComponentKind::CurrentSource: return current;
  }
  throw std::logic_error("bad component kind");
}

Eigen::MatrixXi& IncidenceSet::of(ComponentKind kind) {
  return const_cast<Eigen::MatrixXi&>(std::as_const(*this).of(kind));
}

IncidenceSet IncidenceSet::zeros(Index rows, const std::array<Index, 5>& counts) {
  IncidenceSet inc;
  for (ComponentKind kind : kAllKinds) {
    inc.of(kind) = Eigen::MatrixXi::Zero(rows, counts[static_cast<int>(kind)]);
  }
  return inc;
}

IncidenceSet incidence_of(const CircuitGraph& graph) {
  std::array<Index, 5> counts{};
  for (ComponentKind kind : kAllKinds) counts[static_cast<int>(kind)] = graph.count(kind);
  IncidenceSet inc = IncidenceSet::zeros(graph.non_ground_count(), counts);
  for (const Edge& e : graph.edges()) {
    auto& a = inc.of(e.kind);
    if (Index r = graph.row_of(e.from); r >= 0) a(r, e.id) = 1;
    if (Index r = graph.row_of(e.to); r >= 0) a(r, e.id) = -1;
  }
  return inc;
}

std::vector<std::string> validate(const IncidenceSet& inc) {
  std::vector<std::string> out;
  const Index rows = inc.node_rows();
  for (ComponentKind kind : kAllKinds) {
    const auto& a = inc.of(kind);
    const char code = kind_code(kind);
    if (a.rows() != rows) {
      out.push_back(fmt::format("A_{} has {} rows, expected {}", code, a.rows(), rows));
      continue;
    }
    for (Index c = 0; c < a.cols(); ++c) {
      int plus = 0;
      int minus = 0;
      bool bad_entry = false;
      for (Index r = 0; r < rows; ++r) {
        const int v = a(r, c);
        if (v == 1) ++plus;
        else if (v == -1) ++minus;
        else if (v != 0) bad_entry = true;
      }
      if (bad_entry) {
        out.push_back(fmt::format("A_{} column {}: entry outside {{-1,0,1}}", code, c));
      } else if (plus + minus == 0) {
        out.push_back(fmt::format("A_{} column {}: dangling component", code, c));
      } else if (plus > 1 || minus > 1) {
        out.push_back(fmt::format("A_{} column {}: more than one +1 or -1", code, c));
      }
    }
  }
  return out;
}

CircuitGraph graph_of(const IncidenceSet& inc, Index ground) {
  const Index rows = inc.node_rows();
  auto node = [&](Index row) { return row < ground ? row : row + 1; };
  std::vector<Edge> edges;
  for (ComponentKind kind : kAllKinds) {
    const auto& a = inc.of(kind);
    for (Index c = 0; c < a.cols(); ++c) {
      Index from = ground;
      Index to = ground;
      for (Index r = 0; r < rows; ++r) {
        if (a(r, c) == 1) from = node(r);
        if (a(r, c) == -1) to = node(r);
      }
      edges.push_back(Edge{c, kind, from, to});
    }
  }
  return CircuitGraph(rows + 1, ground, std::move(edges));
}

}  // namespace nphdae
