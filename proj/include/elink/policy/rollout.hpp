#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <unordered_set>
#include <vector>

#include "elink/encoder/graph_transformer.hpp"
#include "elink/env/environment.hpp"
#include "elink/numerics/ops.hpp"
#include "elink/policy/policy_network.hpp"

namespace elink {

/// One sampled trajectory. log_probs and entropies are scalar Vars on the
/// episode tape so the objective can backpropagate through them.
template <class Real>
struct Rollout {
  std::vector<Action> actions;
  std::vector<Var<Real>> log_probs;
  std::vector<Var<Real>> entropies;
  EntityId final_entity = 0;
  double reward = 0.0;

  double log_likelihood() const {
    double s = 0.0;
    for (const auto& lp : log_probs) s += static_cast<double>(lp.item());
    return s;
  }
};

/// Couples environment, encoder session and policy for one episode.
template <class Real>
class Agent {
 public:
  using History = typename PolicyNetwork<Real>::History;

  struct Expansion {
    std::vector<Action> actions;
    std::vector<Var<Real>> action_vectors;  // [e_dest; r] per action
    Var<Real> log_probs;                    // log π over actions
    Var<Real> entropy;                      // H(π(· | s))
  };

  Agent(const Environment& env, const PolicyNetwork<Real>& policy, EncodingSession<Real>& session)
      : env_(&env), policy_(&policy), session_(&session) {}

  const Environment& environment() const { return *env_; }
  EncodingSession<Real>& session() const { return *session_; }

  /// Replaces π by the uniform distribution over available actions (random-walk baseline).
  void set_uniform(bool uniform) noexcept { uniform_ = uniform; }
  bool uniform() const noexcept { return uniform_; }

  History start(EntityId source, RelationId query_rel) const {
    if (uniform_) return {};
    const auto& ctx = session_->context();
    return policy_->init_history(ctx, session_->encode(source, query_rel), session_->relation(env_->graph().relations().start()));
  }

  History advance(const History& history, const Var<Real>& action_vector) const {
    if (uniform_) return history;
    return policy_->encode_history(session_->context(), history, action_vector);
  }

  Var<Real> action_vector(const Action& a, RelationId query_rel) const {
    return ops::concat<Real>({session_->encode(a.dest, query_rel), session_->relation(a.rel)});
  }

  /// Scores the actions of `state`. When `known_answers` is given and this is
  /// the final step, other known answers of `query` are removed from the
  /// action set (unless that would leave it empty).
  Expansion expand(const State& state, const History& history, const Triple* query = nullptr,
                   const std::unordered_set<EntityId>* known_answers = nullptr) const {
    Expansion out;
    out.actions = env_->available_actions(state, session_->view());
    if (known_answers != nullptr && query != nullptr && state.step + 1 == env_->config().horizon) {
      auto masked = false_negative_mask(out.actions, *query, *known_answers, [](const Action& a) { return a.dest; });
      if (!masked.empty()) out.actions = std::move(masked);
    }
    const auto& ctx = session_->context();
    if (uniform_) {
      const Real lp = -std::log(static_cast<Real>(out.actions.size()));
      out.log_probs = ctx.constant(Tensor<Real>({out.actions.size()}, lp));
      out.entropy = ops::entropy_from_log_probs(out.log_probs);
      return out;
    }
    for (const Action& a : out.actions) out.action_vectors.push_back(action_vector(a, state.query_rel));
    const Var<Real> current = session_->encode(state.current, state.query_rel);
    const Var<Real> query_vec = session_->relation(state.query_rel);
    out.log_probs = policy_->log_probs(ctx, history, current, query_vec, ops::stack_rows(out.action_vectors));
    out.entropy = ops::entropy_from_log_probs(out.log_probs);
    return out;
  }

 private:
  const Environment* env_;
  const PolicyNetwork<Real>* policy_;
  EncodingSession<Real>* session_;
  bool uniform_ = false;
};

struct RolloutOptions {
  std::size_t count = 1;
  /// Known tails of the query for final-step false-negative masking (optional).
  const std::unordered_set<EntityId>* known_answers = nullptr;
  /// Soft miss reward (optional).
  const RewardShaper* shaper = nullptr;
};

/// Samples N trajectories of length T for (source, relation, answer). Trajectories
/// sharing an action prefix share its history and scores on the tape.
template <class Real>
std::vector<Rollout<Real>> sample_rollouts(const Agent<Real>& agent, const Triple& query, const RolloutOptions& opt, Rng& rng) {
  using History = typename Agent<Real>::History;
  struct Node {
    State state;
    History history;
    std::optional<typename Agent<Real>::Expansion> expansion;
    std::map<std::size_t, std::size_t> children;
    std::map<std::size_t, Var<Real>> picked;
  };
  const Environment& env = agent.environment();
  std::vector<std::unique_ptr<Node>> nodes;
  nodes.push_back(std::make_unique<Node>(Node{env.initial_state(query.head, query.rel), agent.start(query.head, query.rel), {}, {}, {}}));

  std::vector<Rollout<Real>> out;
  for (std::size_t n = 0; n < opt.count; ++n) {
    Rollout<Real> r;
    std::size_t cur = 0;
    for (std::size_t t = 0; t < env.config().horizon; ++t) {
      Node& node = *nodes[cur];
      if (!node.expansion) node.expansion = agent.expand(node.state, node.history, &query, opt.known_answers);
      const auto& ex = *node.expansion;
      const auto lp = ex.log_probs.value().data();
      const double u = rng.uniform();
      double acc = 0.0;
      std::size_t choice = lp.size() - 1;
      for (std::size_t i = 0; i < lp.size(); ++i) {
        acc += std::exp(static_cast<double>(lp[i]));
        if (u < acc) {
          choice = i;
          break;
        }
      }
      auto pick_it = node.picked.find(choice);
      if (pick_it == node.picked.end()) pick_it = node.picked.emplace(choice, ops::pick(ex.log_probs, choice)).first;
      r.actions.push_back(ex.actions[choice]);
      r.log_probs.push_back(pick_it->second);
      r.entropies.push_back(ex.entropy);
      auto child = node.children.find(choice);
      if (child == node.children.end()) {
        State next = env.step(node.state, ex.actions[choice]);
        // The history after the last action is never read.
        const bool last = t + 1 == env.config().horizon;
        History h = agent.uniform() || last ? node.history : agent.advance(node.history, ex.action_vectors[choice]);
        nodes.push_back(std::make_unique<Node>(Node{next, std::move(h), {}, {}, {}}));
        child = node.children.emplace(choice, nodes.size() - 1).first;
      }
      cur = child->second;
    }
    r.final_entity = nodes[cur]->state.current;
    r.reward = Environment::terminal_reward(query.head, query.rel, r.final_entity, query.tail, opt.shaper);
    out.push_back(std::move(r));
  }
  return out;
}

/// REINFORCE loss with entropy bonus (to minimize):
///   -(1/N) Σ_n (R_n - b) Σ_t log π(a_t^n) - β (1/N) Σ_n Σ_t H_t^n.
/// Rewards are constants; gradients flow through log π and H only.
template <class Real>
Var<Real> reinforce_objective(const std::vector<Rollout<Real>>& rollouts, double entropy_weight, double baseline = 0.0) {
  if (rollouts.empty()) throw std::invalid_argument("reinforce_objective: no rollouts");
  const Real inv_n = Real{1} / static_cast<Real>(rollouts.size());
  std::vector<Var<Real>> terms;
  std::vector<Real> coefs;
  for (const auto& r : rollouts) {
    const Real advantage = static_cast<Real>(r.reward - baseline);
    for (const auto& lp : r.log_probs) {
      terms.push_back(lp);
      coefs.push_back(-advantage * inv_n);
    }
    for (const auto& h : r.entropies) {
      terms.push_back(h);
      coefs.push_back(static_cast<Real>(-entropy_weight) * inv_n);
    }
  }
  return ops::weighted_sum(terms, coefs);
}

}  // namespace elink
