#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "elink/kg/types.hpp"

namespace elink {

class GraphError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Adjacency-list multigraph over dense entity ids. Each list is sorted by
/// (relation, destination) and free of duplicates.
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;

  KnowledgeGraph(std::size_t num_entities, RelationSpace relations, std::vector<std::vector<Edge>> adjacency, bool inverse_closed)
      : num_entities_(num_entities), relations_(relations), adjacency_(std::move(adjacency)), inverse_closed_(inverse_closed) {
    adjacency_.resize(num_entities_);
    for (auto& list : adjacency_) {
      std::sort(list.begin(), list.end());
      list.erase(std::unique(list.begin(), list.end()), list.end());
    }
  }

  std::size_t num_entities() const noexcept { return num_entities_; }
  const RelationSpace& relations() const noexcept { return relations_; }
  bool inverse_closed() const noexcept { return inverse_closed_; }

  std::span<const Edge> edges(EntityId e) const { return adjacency_.at(e); }

  std::size_t edge_count() const {
    std::size_t n = 0;
    for (const auto& l : adjacency_) n += l.size();
    return n;
  }

  bool contains(EntityId head, RelationId rel, EntityId tail) const {
    if (head >= num_entities_) return false;
    const auto& l = adjacency_[head];
    return std::binary_search(l.begin(), l.end(), Edge{rel, tail});
  }
  bool contains(const Triple& t) const { return contains(t.head, t.rel, t.tail); }

  /// Distinct neighbor entities of e, ascending.
  std::vector<EntityId> neighbors(EntityId e) const {
    std::vector<EntityId> out;
    for (const Edge& x : edges(e)) out.push_back(x.dest);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  /// Every stored edge as a triple, in (head, relation, tail) order.
  std::vector<Triple> triples() const {
    std::vector<Triple> out;
    for (EntityId h = 0; h < num_entities_; ++h)
      for (const Edge& x : adjacency_[h]) out.push_back({h, x.rel, x.dest});
    return out;
  }

  friend bool operator==(const KnowledgeGraph&, const KnowledgeGraph&) = default;

 private:
  std::size_t num_entities_ = 0;
  RelationSpace relations_;
  std::vector<std::vector<Edge>> adjacency_;
  bool inverse_closed_ = false;
};

/// Builds adjacency lists from facts, optionally adding (t, r⁻¹, h) for every (h, r, t).
inline KnowledgeGraph build_graph(std::span<const Triple> triples, std::size_t num_entities, RelationSpace relations,
                                  bool add_inverse) {
  std::vector<std::vector<Edge>> adjacency(num_entities);
  for (const Triple& t : triples) {
    if (t.head >= num_entities || t.tail >= num_entities) {
      throw GraphError("build_graph: entity id out of bounds in (" + std::to_string(t.head) + ", " + std::to_string(t.rel) +
                       ", " + std::to_string(t.tail) + ") with " + std::to_string(num_entities) + " entities");
    }
    if (!relations.is_fact_relation(t.rel)) {
      throw GraphError("build_graph: relation id " + std::to_string(t.rel) + " is reserved or out of bounds");
    }
    adjacency[t.head].push_back({t.rel, t.tail});
    if (add_inverse) adjacency[t.tail].push_back({relations.inverse(t.rel), t.head});
  }
  return KnowledgeGraph(num_entities, relations, std::move(adjacency), add_inverse);
}

/// Triples plus their inverses.
inline std::vector<Triple> with_inverses(std::span<const Triple> triples, const RelationSpace& relations) {
  std::vector<Triple> out(triples.begin(), triples.end());
  out.reserve(2 * triples.size());
  for (const Triple& t : triples) out.push_back({t.tail, relations.inverse(t.rel), t.head});
  return out;
}

}  // namespace elink
