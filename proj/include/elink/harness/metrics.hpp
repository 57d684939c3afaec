#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "elink/harness/beam_search.hpp"

namespace elink {

/// 1-based position of `answer` among ranked predictions; nullopt if never reached.
inline std::optional<std::size_t> raw_rank(const std::vector<RankedPrediction>& ranked, EntityId answer) {
  for (std::size_t i = 0; i < ranked.size(); ++i)
    if (ranked[i].entity == answer) return i + 1;
  return std::nullopt;
}

/// Rank of `answer` after removing the other known answers of the query.
inline std::optional<std::size_t> filtered_rank(const std::vector<RankedPrediction>& ranked, EntityId answer,
                                                const std::unordered_set<EntityId>& known_answers) {
  std::size_t rank = 1;
  for (const auto& p : ranked) {
    if (p.entity == answer) return rank;
    if (!known_answers.contains(p.entity)) ++rank;
  }
  return std::nullopt;
}

struct MetricSummary {
  std::size_t count = 0;
  double mrr = 0.0;
  double hits1 = 0.0, hits3 = 0.0, hits10 = 0.0;
};

/// MRR and Hits@{1,3,10}; an unreached answer contributes 0 to every metric.
inline MetricSummary summarize_ranks(const std::vector<std::optional<std::size_t>>& ranks) {
  MetricSummary m;
  m.count = ranks.size();
  if (ranks.empty()) return m;
  for (const auto& r : ranks) {
    if (!r) continue;
    m.mrr += 1.0 / static_cast<double>(*r);
    m.hits1 += *r <= 1 ? 1.0 : 0.0;
    m.hits3 += *r <= 3 ? 1.0 : 0.0;
    m.hits10 += *r <= 10 ? 1.0 : 0.0;
  }
  const auto n = static_cast<double>(ranks.size());
  m.mrr /= n;
  m.hits1 /= n;
  m.hits3 /= n;
  m.hits10 /= n;
  return m;
}

struct RelationClassStats {
  double fraction = 0.0;  // share of evaluated queries, in [0, 1]
  double mrr = 0.0;
  std::size_t count = 0;
};

struct EvalReport {
  MetricSummary overall;
  RelationClassStats to_one, to_many;
  /// Query relations that never occur in the seen graph (classified to-1).
  std::vector<RelationId> unseen_relations;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["queries"] = overall.count;
    j["mrr"] = overall.mrr;
    j["hits_at"] = nlohmann::ordered_json{{"1", overall.hits1}, {"3", overall.hits3}, {"10", overall.hits10}};
    j["relation_types"] = nlohmann::ordered_json{
        {"to-1", {{"fraction", to_one.fraction}, {"mrr", to_one.mrr}, {"count", to_one.count}}},
        {"to-Many", {{"fraction", to_many.fraction}, {"mrr", to_many.mrr}, {"count", to_many.count}}}};
    j["relations_absent_from_seen_graph"] = unseen_relations;
    return j;
  }
};

}  // namespace elink
