#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <vector>

#include "elink/policy/rollout.hpp"

namespace elink {

/// One decoded answer with the best path that reached it.
struct RankedPrediction {
  EntityId entity = 0;
  EntityId source = 0;
  std::vector<Action> path;  // exactly T actions, self-loops included
  double log_likelihood = 0.0;
  std::size_t rank = 0;
};

/// Deduplicates finished paths by final entity (keeping the highest
/// log-likelihood; the earlier path on exact ties) and ranks by score
/// descending, then entity id ascending.
inline std::vector<RankedPrediction> rank_predictions(const std::vector<RankedPrediction>& finished) {
  std::map<EntityId, RankedPrediction> best;
  for (const auto& p : finished) {
    auto it = best.find(p.entity);
    if (it == best.end() || p.log_likelihood > it->second.log_likelihood) best[p.entity] = p;
  }
  std::vector<RankedPrediction> out;
  out.reserve(best.size());
  for (auto& [e, p] : best) out.push_back(std::move(p));
  std::stable_sort(out.begin(), out.end(), [](const RankedPrediction& a, const RankedPrediction& b) {
    if (a.log_likelihood != b.log_likelihood) return a.log_likelihood > b.log_likelihood;
    return a.entity < b.entity;
  });
  for (std::size_t i = 0; i < out.size(); ++i) out[i].rank = i + 1;
  return out;
}

/// Width-limited beam over exact action prefixes for T steps, scored by
/// cumulative log π. Prefix ties are broken by (parent beam, action) order.
template <class Real>
std::vector<RankedPrediction> beam_search(const Agent<Real>& agent, EntityId source, RelationId query_rel, std::size_t width) {
  using History = typename Agent<Real>::History;
  struct Beam {
    State state;
    History history;
    std::vector<Action> path;
    double score;
  };
  struct Candidate {
    std::size_t beam, action;
    double score;
  };
  const Environment& env = agent.environment();
  std::vector<Beam> beams{{env.initial_state(source, query_rel), agent.start(source, query_rel), {}, 0.0}};
  for (std::size_t t = 0; t < env.config().horizon; ++t) {
    std::vector<typename Agent<Real>::Expansion> expansions;
    std::vector<Candidate> candidates;
    for (std::size_t b = 0; b < beams.size(); ++b) {
      expansions.push_back(agent.expand(beams[b].state, beams[b].history));
      const auto lp = expansions.back().log_probs.value().data();
      for (std::size_t a = 0; a < lp.size(); ++a) candidates.push_back({b, a, beams[b].score + static_cast<double>(lp[a])});
    }
    std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& x, const Candidate& y) { return x.score > y.score; });
    if (candidates.size() > width) candidates.resize(width);
    std::vector<Beam> next;
    next.reserve(candidates.size());
    for (const Candidate& c : candidates) {
      const Beam& parent = beams[c.beam];
      const auto& ex = expansions[c.beam];
      const Action& act = ex.actions[c.action];
      Beam child{env.step(parent.state, act), {}, parent.path, c.score};
      child.path.push_back(act);
      // The history after the last step is never read.
      if (t + 1 < env.config().horizon && !agent.uniform()) child.history = agent.advance(parent.history, ex.action_vectors[c.action]);
      next.push_back(std::move(child));
    }
    beams = std::move(next);
  }
  std::vector<RankedPrediction> finished;
  finished.reserve(beams.size());
  for (const Beam& b : beams) finished.push_back({b.state.current, source, b.path, b.score, 0});
  return rank_predictions(finished);
}

/// Reference decoder: scores every length-T action sequence. Exponential; tests only.
template <class Real>
std::vector<RankedPrediction> exhaustive_search(const Agent<Real>& agent, EntityId source, RelationId query_rel) {
  using History = typename Agent<Real>::History;
  const Environment& env = agent.environment();
  std::vector<RankedPrediction> finished;
  auto recurse = [&](auto& self, const State& s, const History& h, std::vector<Action>& path, double score) -> void {
    if (s.step == env.config().horizon) {
      finished.push_back({s.current, source, path, score, 0});
      return;
    }
    const auto ex = agent.expand(s, h);
    const auto lp = ex.log_probs.value().data();
    for (std::size_t a = 0; a < ex.actions.size(); ++a) {
      path.push_back(ex.actions[a]);
      const History next = (s.step + 1 < env.config().horizon && !agent.uniform()) ? agent.advance(h, ex.action_vectors[a]) : h;
      self(self, env.step(s, ex.actions[a]), next, path, score + static_cast<double>(lp[a]));
      path.pop_back();
    }
  };
  std::vector<Action> path;
  recurse(recurse, env.initial_state(source, query_rel), agent.start(source, query_rel), path, 0.0);
  return rank_predictions(finished);
}

}  // namespace elink
