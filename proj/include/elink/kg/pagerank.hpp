#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "elink/kg/graph.hpp"
#include "elink/numerics/rng.hpp"

namespace elink {

struct PageRankScores {
  std::vector<double> score;
  /// L1 distance between successive iterates, one entry per iteration.
  std::vector<double> residuals;
};

/// Power-iteration PageRank with uniform teleport. Each stored edge carries
/// one unit of out-weight; mass of nodes without out-edges is spread uniformly.
inline PageRankScores pagerank(const KnowledgeGraph& graph, double damping = 0.85, std::size_t iterations = 50) {
  const std::size_t n = graph.num_entities();
  if (n == 0) throw std::invalid_argument("pagerank: empty graph");
  if (!(damping >= 0.0 && damping < 1.0)) throw std::invalid_argument("pagerank: damping must lie in [0, 1)");
  PageRankScores out;
  std::vector<double> rank(n, 1.0 / static_cast<double>(n)), next(n);
  for (std::size_t it = 0; it < iterations; ++it) {
    double dangling = 0.0;
    std::fill(next.begin(), next.end(), 0.0);
    for (EntityId u = 0; u < n; ++u) {
      const auto edges = graph.edges(u);
      if (edges.empty()) {
        dangling += rank[u];
        continue;
      }
      const double share = rank[u] / static_cast<double>(edges.size());
      for (const Edge& e : edges) next[e.dest] += share;
    }
    const double base = (1.0 - damping) / static_cast<double>(n) + damping * dangling / static_cast<double>(n);
    double total = 0.0;
    for (double& v : next) total += (v = base + damping * v);
    double residual = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      next[i] /= total;  // removes rounding drift only; total is 1 analytically
      residual += std::abs(next[i] - rank[i]);
    }
    rank.swap(next);
    out.residuals.push_back(residual);
  }
  out.score = std::move(rank);
  return out;
}

/// Keeps, per entity, the k edges whose destinations score highest; ties go
/// to the smaller (relation, destination). Kept lists stay in canonical order.
inline KnowledgeGraph prune_actions(const KnowledgeGraph& graph, const PageRankScores& scores, std::size_t k) {
  if (k == 0) throw std::invalid_argument("prune_actions: k must be at least 1");
  if (scores.score.size() != graph.num_entities()) throw std::invalid_argument("prune_actions: score vector size mismatch");
  std::vector<std::vector<Edge>> adjacency(graph.num_entities());
  bool truncated = false;
  for (EntityId u = 0; u < graph.num_entities(); ++u) {
    std::vector<Edge> list(graph.edges(u).begin(), graph.edges(u).end());
    if (list.size() > k) {
      truncated = true;
      std::stable_sort(list.begin(), list.end(), [&](const Edge& a, const Edge& b) {
        const double sa = scores.score[a.dest], sb = scores.score[b.dest];
        if (sa != sb) return sa > sb;
        return a < b;
      });
      list.resize(k);
    }
    adjacency[u] = std::move(list);
  }
  return KnowledgeGraph(graph.num_entities(), graph.relations(), std::move(adjacency), graph.inverse_closed() && !truncated);
}

/// Removes ⌊fraction·|N|⌋ distinct neighbor entities (all their edges) uniformly
/// at random, always retaining at least one neighbor when any exists.
inline std::vector<Edge> sample_neighbor_mask(std::span<const Edge> edges, double fraction, Rng& rng) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw std::invalid_argument("sample_neighbor_mask: fraction must lie in [0, 1)");
  std::vector<EntityId> neighbors;
  for (const Edge& e : edges) neighbors.push_back(e.dest);
  std::sort(neighbors.begin(), neighbors.end());
  neighbors.erase(std::unique(neighbors.begin(), neighbors.end()), neighbors.end());
  const std::size_t n = neighbors.size();
  std::size_t masked = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
  if (n > 0) masked = std::min(masked, n - 1);
  if (masked == 0) return {edges.begin(), edges.end()};
  for (std::size_t i = 0; i < masked; ++i) std::swap(neighbors[i], neighbors[i + rng.below(n - i)]);
  std::vector<EntityId> removed(neighbors.begin(), neighbors.begin() + static_cast<std::ptrdiff_t>(masked));
  std::sort(removed.begin(), removed.end());
  std::vector<Edge> kept;
  for (const Edge& e : edges)
    if (!std::binary_search(removed.begin(), removed.end(), e.dest)) kept.push_back(e);
  return kept;
}

}  // namespace elink
