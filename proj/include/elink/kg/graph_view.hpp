#pragma once

#include <algorithm>
#include <vector>

#include "elink/kg/graph.hpp"

namespace elink {

/// A graph with a small set of edges hidden from every reader; used to keep
/// a queried fact (and its inverse) out of reach during its own episode.
class GraphView {
 public:
  GraphView() = default;
  explicit GraphView(const KnowledgeGraph& graph) : graph_(&graph) {}
  GraphView(const KnowledgeGraph& graph, std::vector<Triple> hidden) : graph_(&graph), hidden_(std::move(hidden)) {
    std::sort(hidden_.begin(), hidden_.end());
  }

  /// Hides (h, r, t) and (t, r⁻¹, h).
  static GraphView hiding_fact(const KnowledgeGraph& graph, const Triple& fact) {
    const RelationId inv = graph.relations().inverse(fact.rel);
    return GraphView(graph, {fact, Triple{fact.tail, inv, fact.head}});
  }

  const KnowledgeGraph& graph() const { return *graph_; }
  const std::vector<Triple>& hidden() const noexcept { return hidden_; }

  bool is_hidden(EntityId head, const Edge& e) const {
    return !hidden_.empty() && std::binary_search(hidden_.begin(), hidden_.end(), Triple{head, e.rel, e.dest});
  }

  std::vector<Edge> edges(EntityId e) const {
    const auto all = graph_->edges(e);
    std::vector<Edge> out;
    out.reserve(all.size());
    for (const Edge& x : all)
      if (!is_hidden(e, x)) out.push_back(x);
    return out;
  }

  bool contains(EntityId head, RelationId rel, EntityId tail) const {
    return graph_->contains(head, rel, tail) && !is_hidden(head, Edge{rel, tail});
  }

 private:
  const KnowledgeGraph* graph_ = nullptr;
  std::vector<Triple> hidden_;
};

}  // namespace elink
