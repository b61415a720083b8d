#pragma once

#include "nphdae/assembly.hpp"

#include <random>

namespace nphdae::testing {

// Random multigraph over 2..7 nodes with 1..9 components and at least one
// capacitor or inductor. Edge ids are contiguous per kind.
inline CircuitGraph random_circuit(std::mt19937& rng) {
  const Index nodes = 2 + static_cast<Index>(rng() % 6);
  std::vector<Edge> edges;
  std::array<Index, 5> next{};
  const int count = 1 + static_cast<int>(rng() % 9);
  for (int e = 0; e < count; ++e) {
    auto k = static_cast<std::size_t>(rng() % 5);
    if (e == 0) k = rng() % 2 ? 0 : 2;
    const Index a = static_cast<Index>(rng() % nodes);
    Index b = static_cast<Index>(rng() % (nodes - 1));
    if (b >= a) ++b;
    edges.push_back({next[k]++, kAllKinds[k], a, b});
  }
  return CircuitGraph(nodes, static_cast<Index>(rng() % nodes), edges);
}

inline std::shared_ptr<LinearRelations> unit_relations(const IncidenceSet& inc) {
  return std::make_shared<LinearRelations>(Vector::Ones(inc.resistor.cols()), Vector::Ones(inc.capacitor.cols()),
                                           Vector::Ones(inc.inductor.cols()));
}

inline SourceSignal zero_sources(const IncidenceSet& inc) {
  return SourceSignal(Vector::Zero(inc.current.cols() + inc.voltage.cols()));
}

}  // namespace nphdae::testing
