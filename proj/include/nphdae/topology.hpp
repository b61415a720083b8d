#pragma once

#include "nphdae/errors.hpp"

#include <Eigen/Core>
#include <json.hpp>

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nphdae {

// Order matters: it is the incidence-family index used throughout (C, R, L, V, I).
enum class ComponentKind { Capacitor = 0, Resistor, Inductor, VoltageSource, CurrentSource };

inline constexpr std::array<ComponentKind, 5> kAllKinds{
    ComponentKind::Capacitor, ComponentKind::Resistor, ComponentKind::Inductor,
    ComponentKind::VoltageSource, ComponentKind::CurrentSource};

char kind_code(ComponentKind kind);
ComponentKind parse_kind(std::string_view code);

struct Edge {
  Index id = 0;  // column of the incidence matrix of its kind
  ComponentKind kind = ComponentKind::Resistor;
  Index from = 0;
  Index to = 0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

// Directed component graph. Edge direction is the positive-current convention;
// node ids are 0-based and include the ground node.
class CircuitGraph {
 public:
  CircuitGraph(Index node_count, Index ground, std::vector<Edge> edges);

  Index node_count() const { return node_count_; }
  Index ground() const { return ground_; }
  Index non_ground_count() const { return node_count_ - 1; }
  std::span<const Edge> edges() const { return edges_; }
  Index count(ComponentKind kind) const;

  // Row of `node` in the incidence matrices, or -1 for ground.
  Index row_of(Index node) const;
  Index node_of_row(Index row) const;

  static CircuitGraph from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

 private:
  Index node_count_;
  Index ground_;
  std::vector<Edge> edges_;
};

struct IncidenceSet {
  Eigen::MatrixXi capacitor;  // A_C
  Eigen::MatrixXi resistor;   // A_R
  Eigen::MatrixXi inductor;   // A_L
  Eigen::MatrixXi voltage;    // A_V
  Eigen::MatrixXi current;    // A_I

  Index node_rows() const { return capacitor.rows(); }
  const Eigen::MatrixXi& of(ComponentKind kind) const;
  Eigen::MatrixXi& of(ComponentKind kind);
  Index count(ComponentKind kind) const { return of(kind).cols(); }

  // All-zero set for `rows` non-ground nodes and the given per-kind counts (C, R, L, V, I).
  static IncidenceSet zeros(Index rows, const std::array<Index, 5>& counts);
};

IncidenceSet incidence_of(const CircuitGraph& graph);

// Violated IncidenceSet invariants; empty when valid.
std::vector<std::string> validate(const IncidenceSet& inc);

// Rebuilds a graph from column signs. Rows map back to node ids around `ground`;
// a single +1 means the edge runs to ground, a single -1 that it runs from ground.
CircuitGraph graph_of(const IncidenceSet& inc, Index ground = 0);

}  // namespace nphdae
