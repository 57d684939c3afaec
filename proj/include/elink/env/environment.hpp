#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "elink/kg/graph_view.hpp"
#include "elink/kg/types.hpp"

namespace elink {

struct EnvConfig {
  /// Rollout horizon T.
  std::size_t horizon = 3;
  /// Outgoing edges kept per entity after PageRank pruning.
  std::size_t top_k = 256;
  bool include_self_loop = true;
  /// Hide the queried fact and its inverse during its own training episode.
  bool hide_answer_edge = true;

  void validate() const {
    if (horizon < 1) throw std::invalid_argument("EnvConfig: horizon must be >= 1");
    if (top_k < 1) throw std::invalid_argument("EnvConfig: top_k must be >= 1");
  }
};

struct State {
  EntityId current = 0;
  RelationId query_rel = 0;
  EntityId source = 0;
  std::size_t step = 0;

  friend bool operator==(const State&, const State&) = default;
};

struct Action {
  RelationId rel = 0;
  EntityId dest = 0;

  friend auto operator<=>(const Action&, const Action&) = default;
};

/// Raised when an action is not available in the given state.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Terminal-reward shaping hook: (source, query relation, final entity) -> [0, 1].
using RewardShaper = std::function<double(EntityId, RelationId, EntityId)>;

/// Deterministic finite-horizon walk over a knowledge graph.
class Environment {
 public:
  Environment(const KnowledgeGraph& graph, EnvConfig cfg) : graph_(&graph), cfg_(cfg) { cfg_.validate(); }

  const EnvConfig& config() const noexcept { return cfg_; }
  const KnowledgeGraph& graph() const noexcept { return *graph_; }
  RelationId self_loop() const { return graph_->relations().self_loop(); }

  State initial_state(EntityId source, RelationId query_rel) const { return State{source, query_rel, source, 0}; }

  /// View of the graph an episode may see: during training the queried fact
  /// and its inverse are hidden when hide_answer_edge is set.
  GraphView episode_view(const std::optional<Triple>& training_query) const {
    if (training_query && cfg_.hide_answer_edge) return GraphView::hiding_fact(*graph_, *training_query);
    return GraphView(*graph_);
  }

  /// Outgoing edges of the current entity, plus the self-loop when enabled.
  /// The self-loop is always present when nothing else is available.
  std::vector<Action> available_actions(const State& s, const GraphView& view) const {
    std::vector<Action> out;
    for (const Edge& e : view.edges(s.current)) out.push_back({e.rel, e.dest});
    if (cfg_.include_self_loop || out.empty()) out.insert(out.begin(), Action{self_loop(), s.current});
    return out;
  }

  std::vector<Action> available_actions(const State& s, const std::optional<Triple>& training_query = std::nullopt) const {
    return available_actions(s, episode_view(training_query));
  }

  /// Deterministic transition; the action must be an edge of the current entity or the self-loop.
  State step(const State& s, const Action& a) const {
    if (s.step >= cfg_.horizon) throw ContractViolation("step: episode already reached the horizon");
    const bool self = a.rel == self_loop() && a.dest == s.current;
    if (!self && !graph_->contains(s.current, a.rel, a.dest)) {
      throw ContractViolation("step: (" + std::to_string(a.rel) + ", " + std::to_string(a.dest) + ") is not an action of entity " +
                              std::to_string(s.current));
    }
    return State{a.dest, s.query_rel, s.source, s.step + 1};
  }

  /// 1 on a hit; otherwise the shaper's value (if any) clamped to [0, 1], else 0.
  static double terminal_reward(EntityId source, RelationId query_rel, EntityId final_entity, EntityId answer,
                                const RewardShaper* shaper = nullptr) {
    if (final_entity == answer) return 1.0;
    if (shaper == nullptr || !*shaper) return 0.0;
    return std::clamp((*shaper)(source, query_rel, final_entity), 0.0, 1.0);
  }

 private:
  const KnowledgeGraph* graph_;
  EnvConfig cfg_;
};

/// Drops candidates that are known answers of the query other than its own
/// tail. The queried tail is never removed.
template <class Candidate, class DestOf>
std::vector<Candidate> false_negative_mask(const std::vector<Candidate>& candidates, const Triple& query,
                                           const std::unordered_set<EntityId>& known_answers, DestOf dest_of) {
  std::vector<Candidate> out;
  for (const Candidate& c : candidates) {
    const EntityId e = dest_of(c);
    if (e != query.tail && known_answers.contains(e)) continue;
    out.push_back(c);
  }
  return out;
}

inline std::vector<EntityId> false_negative_mask(const std::vector<EntityId>& candidates, const Triple& query,
                                                 const std::unordered_set<EntityId>& known_answers) {
  return false_negative_mask(candidates, query, known_answers, [](EntityId e) { return e; });
}

}  // namespace elink
