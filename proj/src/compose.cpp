#include "nphdae/compose.hpp"

#include <fmt/format.h>

#include <map>
#include <numeric>

namespace nphdae {

CompositeSystem::CompositeSystem(std::vector<Subsystem> parts) : parts_(std::move(parts)) {
  if (parts_.empty()) throw ConfigError("a composite needs at least one subsystem");
  std::array<Index, 5> counts{};
  Index rows = 0;
  for (const auto& p : parts_) {
    if (p.system.layout().n_lambda != 0) throw StructureError("subsystems must not carry coupling currents");
    node_offset_.push_back(rows);
    rows += p.system.incidences().node_rows();
    for (std::size_t k = 0; k < 5; ++k) counts[k] += p.system.incidences().count(kAllKinds[k]);
  }
  inc_ = IncidenceSet::zeros(rows, counts);
  std::array<Index, 5> col{};
  std::vector<std::shared_ptr<const ComponentRelations>> rels;
  std::vector<SourceSignal> srcs;
  std::vector<Index> currents;
  for (std::size_t s = 0; s < parts_.size(); ++s) {
    const IncidenceSet& in = parts_[s].system.incidences();
    for (std::size_t k = 0; k < 5; ++k) {
      const auto& a = in.of(kAllKinds[k]);
      inc_.of(kAllKinds[k]).block(node_offset_[s], col[k], a.rows(), a.cols()) = a;
      col[k] += a.cols();
    }
    rels.push_back(parts_[s].system.relations_ptr());
    srcs.push_back(parts_[s].system.sources());
    currents.push_back(in.current.cols());
  }
  relations_ = std::make_shared<StackedRelations>(std::move(rels));
  sources_ = SourceSignal::concat(srcs, currents);
}

Index CompositeSystem::node_row(std::size_t sub, Index node) const {
  if (sub >= parts_.size()) throw ConfigError(fmt::format("no subsystem {}", sub));
  const CircuitGraph& g = parts_[sub].graph;
  if (node < 0 || node >= g.node_count()) throw ConfigError(fmt::format("subsystem {} has no node {}", sub, node));
  const Index r = g.row_of(node);
  if (r < 0) throw ConfigError(fmt::format("cannot couple the ground node of subsystem {}", sub));
  return node_offset_[sub] + r;
}

std::size_t CompositeSystem::owner_of_row(Index row) const {
  for (std::size_t s = parts_.size(); s-- > 0;)
    if (row >= node_offset_[s]) return s;
  throw ConfigError("node row out of range");
}

PhdaeSystem CompositeSystem::system(const Eigen::MatrixXi& coupling) const {
  return PhdaeSystem(inc_, relations_, sources_, coupling);
}

Vector CompositeSystem::embed(const std::vector<Vector>& states, Index n_lambda) const {
  if (states.size() != parts_.size()) throw StructureError("one state per subsystem expected");
  Index n_c = 0, n_l = 0, n_v = 0, n_vs = 0;
  for (std::size_t s = 0; s < parts_.size(); ++s) {
    const StateLayout& l = parts_[s].system.layout();
    if (states[s].size() != l.size()) throw StructureError(fmt::format("state of subsystem {} has wrong size", s));
    n_c += l.n_c;
    n_l += l.n_l;
    n_v += l.n_v;
    n_vs += l.n_vs;
  }
  const StateLayout out{n_c, n_l, n_v, n_vs, n_lambda};
  Vector x = Vector::Zero(out.size());
  Index c = 0, f = 0, e = 0, j = 0;
  for (std::size_t s = 0; s < parts_.size(); ++s) {
    const StateLayout& l = parts_[s].system.layout();
    x.segment(out.q_begin() + c, l.n_c) = states[s].segment(l.q_begin(), l.n_c);
    x.segment(out.phi_begin() + f, l.n_l) = states[s].segment(l.phi_begin(), l.n_l);
    x.segment(out.e_begin() + e, l.n_v) = states[s].segment(l.e_begin(), l.n_v);
    x.segment(out.jv_begin() + j, l.n_vs) = states[s].segment(l.jv_begin(), l.n_vs);
    c += l.n_c;
    f += l.n_l;
    e += l.n_v;
    j += l.n_vs;
  }
  return x;
}

std::vector<Vector> CompositeSystem::extract(const Vector& x) const {
  Index n_c = 0, n_l = 0, n_v = 0, n_vs = 0;
  for (const auto& p : parts_) {
    n_c += p.system.layout().n_c;
    n_l += p.system.layout().n_l;
    n_v += p.system.layout().n_v;
    n_vs += p.system.layout().n_vs;
  }
  const StateLayout out{n_c, n_l, n_v, n_vs, x.size() - (n_c + n_l + n_v + n_vs)};
  if (out.n_lambda < 0) throw StructureError("composite state too short");
  std::vector<Vector> states;
  Index c = 0, f = 0, e = 0, j = 0;
  for (const auto& p : parts_) {
    const StateLayout& l = p.system.layout();
    Vector s(l.size());
    s << x.segment(out.q_begin() + c, l.n_c), x.segment(out.phi_begin() + f, l.n_l),
        x.segment(out.e_begin() + e, l.n_v), x.segment(out.jv_begin() + j, l.n_vs);
    c += l.n_c;
    f += l.n_l;
    e += l.n_v;
    j += l.n_vs;
    states.push_back(std::move(s));
  }
  return states;
}

std::vector<Coupling> couplings_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ConfigError("coupling file must hold a JSON list");
  std::vector<Coupling> out;
  try {
    for (const auto& c : j) {
      for (const auto& [key, v] : c.items())
        if (key != "sub_a" && key != "node_a" && key != "sub_b" && key != "node_b")
          throw ConfigError(fmt::format("unknown coupling key '{}'", key));
      out.push_back({c.at("sub_a").get<std::size_t>(), c.at("node_a").get<Index>(), c.at("sub_b").get<std::size_t>(),
                     c.at("node_b").get<Index>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("bad coupling entry: {}", e.what()));
  }
  return out;
}

nlohmann::json to_json(const std::vector<Coupling>& couplings) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& c : couplings)
    out.push_back({{"sub_a", c.sub_a}, {"node_a", c.node_a}, {"sub_b", c.sub_b}, {"node_b", c.node_b}});
  return out;
}

Eigen::MatrixXi interconnection(const CompositeSystem& cs, const std::vector<Coupling>& couplings) {
  Eigen::MatrixXi a = Eigen::MatrixXi::Zero(cs.node_rows(), static_cast<Index>(couplings.size()));
  for (std::size_t k = 0; k < couplings.size(); ++k) {
    const Coupling& c = couplings[k];
    const Index ra = cs.node_row(c.sub_a, c.node_a);
    const Index rb = cs.node_row(c.sub_b, c.node_b);
    if (ra == rb) throw ConfigError(fmt::format("coupling {} joins a node to itself", k));
    a(ra, static_cast<Index>(k)) = 1;
    a(rb, static_cast<Index>(k)) = -1;
  }
  return a;
}

void validate_interconnection(const CompositeSystem& cs, const Eigen::MatrixXi& a, bool allow_internal) {
  if (a.rows() != cs.node_rows())
    throw ConfigError(fmt::format("interconnection has {} rows, composite has {} node rows", a.rows(), cs.node_rows()));
  for (Index k = 0; k < a.cols(); ++k) {
    Index plus = -1, minus = -1;
    for (Index r = 0; r < a.rows(); ++r) {
      const int v = a(r, k);
      if (v == 0) continue;
      if (v == 1 && plus < 0) plus = r;
      else if (v == -1 && minus < 0) minus = r;
      else throw ConfigError(fmt::format("interconnection column {} is not a single +1/-1 pair", k));
    }
    if (plus < 0 || minus < 0) throw ConfigError(fmt::format("interconnection column {} needs one +1 and one -1", k));
    if (!allow_internal && cs.owner_of_row(plus) == cs.owner_of_row(minus))
      throw ConfigError(fmt::format("interconnection column {} couples subsystem {} to itself", k, cs.owner_of_row(plus)));
  }
}

PhdaeSystem compose(const CompositeSystem& cs, const Eigen::MatrixXi& a_lambda, bool allow_internal) {
  validate_interconnection(cs, a_lambda, allow_internal);
  return cs.system(a_lambda);
}

std::vector<Coupling> complete_graph_couplings(std::size_t units, Index unit_node, Index line_in, Index line_out) {
  std::vector<Coupling> out;
  std::size_t line = units;
  for (std::size_t i = 0; i < units; ++i) {
    for (std::size_t j = i + 1; j < units; ++j, ++line) {
      out.push_back({i, unit_node, line, line_in});
      out.push_back({line, line_out, j, unit_node});
    }
  }
  return out;
}

MergedCircuit merge_circuits(const std::vector<Subsystem>& parts, const std::vector<Coupling>& couplings) {
  // Union-find over (subsystem, node) pairs; all grounds form one class.
  std::vector<Index> offset;
  Index total = 0;
  for (const auto& p : parts) {
    offset.push_back(total);
    total += p.graph.node_count();
  }
  std::vector<Index> parent(static_cast<std::size_t>(total));
  std::iota(parent.begin(), parent.end(), Index{0});
  auto find = [&](Index i) {
    while (parent[static_cast<std::size_t>(i)] != i) i = parent[static_cast<std::size_t>(i)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(i)])];
    return i;
  };
  auto unite = [&](Index a, Index b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
  };
  for (std::size_t s = 1; s < parts.size(); ++s) unite(offset[0] + parts[0].graph.ground(), offset[s] + parts[s].graph.ground());
  for (const auto& c : couplings) {
    if (c.sub_a >= parts.size() || c.sub_b >= parts.size()) throw ConfigError("coupling refers to a missing subsystem");
    unite(offset[c.sub_a] + c.node_a, offset[c.sub_b] + c.node_b);
  }
  const Index ground_class = find(offset[0] + parts[0].graph.ground());
  std::map<Index, Index> id;
  id[ground_class] = 0;
  for (Index i = 0; i < total; ++i)
    if (!id.count(find(i))) id.emplace(find(i), static_cast<Index>(id.size()));

  MergedCircuit out{CircuitGraph(2, 0, {}), {}};
  std::vector<Edge> edges;
  std::array<Index, 5> next{};
  for (std::size_t k = 0; k < 5; ++k) {
    for (std::size_t s = 0; s < parts.size(); ++s) {
      std::vector<Edge> mine;
      for (const Edge& e : parts[s].graph.edges())
        if (e.kind == kAllKinds[k]) mine.push_back(e);
      std::sort(mine.begin(), mine.end(), [](const Edge& a, const Edge& b) { return a.id < b.id; });
      for (const Edge& e : mine)
        edges.push_back({next[k]++, e.kind, id.at(find(offset[s] + e.from)), id.at(find(offset[s] + e.to))});
    }
  }
  for (std::size_t s = 0; s < parts.size(); ++s) {
    std::vector<Index> m;
    for (Index n = 0; n < parts[s].graph.node_count(); ++n) m.push_back(id.at(find(offset[s] + n)));
    out.node_map.push_back(std::move(m));
  }
  out.graph = CircuitGraph(static_cast<Index>(id.size()), 0, std::move(edges));
  return out;
}

}  // namespace nphdae
