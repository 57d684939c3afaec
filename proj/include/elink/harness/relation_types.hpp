#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "elink/harness/metrics.hpp"
#include "elink/kg/types.hpp"

namespace elink {

enum class RelationClass { to_one, to_many };

/// Mean number of distinct tails per distinct head, per relation, on the seen
/// snapshot. Inverse relations are measured on the reversed triples.
class RelationCardinality {
 public:
  static constexpr double kThreshold = 1.5;

  RelationCardinality(std::span<const Triple> seen_triples, RelationSpace relations) : relations_(relations) {
    std::map<RelationId, std::map<EntityId, std::set<EntityId>>> tails;
    for (const Triple& t : seen_triples) {
      tails[t.rel][t.head].insert(t.tail);
      tails[relations.inverse(t.rel)][t.tail].insert(t.head);
    }
    for (const auto& [r, by_head] : tails) {
      std::size_t total = 0;
      for (const auto& [h, ts] : by_head) total += ts.size();
      ratio_[r] = static_cast<double>(total) / static_cast<double>(by_head.size());
    }
  }

  /// nullopt when the relation never occurs in the seen graph.
  std::optional<double> ratio(RelationId r) const {
    auto it = ratio_.find(r);
    if (it == ratio_.end()) return std::nullopt;
    return it->second;
  }

  /// ratio > 1.5 → to-Many; otherwise (including absent relations) to-1.
  RelationClass classify(RelationId r) const {
    const auto x = ratio(r);
    return x && *x > kThreshold ? RelationClass::to_many : RelationClass::to_one;
  }

 private:
  RelationSpace relations_;
  std::map<RelationId, double> ratio_;
};

/// Splits per-query ranks into the to-1 / to-Many classes of their relation.
inline void relation_type_report(const std::vector<Triple>& queries, const std::vector<std::optional<std::size_t>>& ranks,
                                 const RelationCardinality& card, EvalReport& report) {
  std::vector<std::optional<std::size_t>> one, many;
  std::set<RelationId> absent;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const RelationId r = queries[i].rel;
    if (!card.ratio(r)) absent.insert(r);
    (card.classify(r) == RelationClass::to_many ? many : one).push_back(ranks[i]);
  }
  const double n = queries.empty() ? 1.0 : static_cast<double>(queries.size());
  report.to_one = {static_cast<double>(one.size()) / n, summarize_ranks(one).mrr, one.size()};
  report.to_many = {static_cast<double>(many.size()) / n, summarize_ranks(many).mrr, many.size()};
  report.unseen_relations.assign(absent.begin(), absent.end());
}

}  // namespace elink
