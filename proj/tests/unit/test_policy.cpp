#include <cmath>
#include <map>

#include <gtest/gtest.h>

#include "elink/harness/model.hpp"
#include "elink/policy/rollout.hpp"
#include "finite_difference.hpp"
#include "gradient_suites.hpp"
#include "reinforce_check.hpp"

using namespace elink;

namespace {

EncoderConfig tiny_encoder() {
  EncoderConfig e;
  e.dim = 4;
  e.heads = 2;
  e.ffn_hidden = 8;
  e.dropout = 0.0;
  e.mask_fraction = 0.0;
  return e;
}

PolicyConfig tiny_policy() {
  PolicyConfig p;
  p.lstm_hidden = 5;
  p.mlp_hidden = 6;
  return p;
}

struct Episode {
  KnowledgeGraph graph;
  Model<double> model;
  Tape<double> tape;
  ForwardContext<double> ctx;
  GraphView view;
  EncodingSession<double> session;
  Environment env;
  Agent<double> agent;

  Episode(const std::vector<Triple>& facts, std::size_t n, EnvConfig ec, std::uint64_t seed = 1)
      : graph(build_graph(facts, n, RelationSpace(2), true)),
        model(tiny_encoder(), tiny_policy(), n, RelationSpace(2), seed),
        tape(true),
        ctx{tape, model.store(), false, nullptr},
        view(graph),
        session(model.encoder(), ctx, view),
        env(graph, ec),
        agent(env, model.policy(), session) {}
};

const std::vector<Triple> kFacts{{0, 0, 1}, {0, 1, 2}, {1, 0, 3}, {2, 1, 3}, {3, 0, 4}};

}  // namespace

TEST(PolicyConfig, DefaultsAndValidation) {
  const PolicyConfig p;
  EXPECT_EQ(p.rollouts, 4u);
  EXPECT_EQ(p.lstm_layers, 2u);
  EXPECT_GE(p.entropy_weight, 0.0);
  EXPECT_LE(p.entropy_weight, 0.1);
  PolicyConfig bad;
  bad.entropy_weight = 0.2;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = PolicyConfig{};
  bad.rollouts = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Policy, LogitsMatchHandComputedHead) {
  Rng rng(3);
  PolicyConfig pc = tiny_policy();
  pc.lstm_layers = 1;
  ParamStore<double> store;
  Rng init(2);
  const PolicyNetwork<double> policy(pc, 3, store, init);
  Tape<double> tape(false);
  ForwardContext<double> ctx{tape, store, false, nullptr};
  const auto h = elink::testing::random_tensor({5}, rng), e = elink::testing::random_tensor({3}, rng),
             q = elink::testing::random_tensor({3}, rng), a = elink::testing::random_tensor({4, 6}, rng);
  const PolicyNetwork<double>::History hist{{ctx.constant(h), ctx.constant(Tensor<double>({5}))}};
  const auto logits = policy.logits(ctx, hist, ctx.constant(e), ctx.constant(q), ctx.constant(a)).value();
  const auto& w1 = store.value(policy.params().w1);
  const auto& w2 = store.value(policy.params().w2);
  std::vector<double> state(h.data().begin(), h.data().end());
  state.insert(state.end(), e.data().begin(), e.data().end());
  state.insert(state.end(), q.data().begin(), q.data().end());
  std::vector<double> hid(6, 0.0), proj(6, 0.0);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 11; ++j) hid[i] += w1.at(i, j) * state[j];
    hid[i] = std::max(0.0, hid[i]);
  }
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j) proj[i] += w2.at(i, j) * hid[j];
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < 6; ++j) s += a.at(r, j) * proj[j];
    EXPECT_NEAR(logits[r], s, 1e-12);
  }
}

TEST(Policy, InitHistoryIsOneLstmStepFromZero) {
  PolicyConfig pc = tiny_policy();
  pc.lstm_layers = 2;
  ParamStore<double> store;
  Rng init(4), rng(5);
  const PolicyNetwork<double> policy(pc, 2, store, init);
  Tape<double> tape(false);
  ForwardContext<double> ctx{tape, store, false, nullptr};
  const auto src = ctx.constant(elink::testing::random_tensor({2}, rng));
  const auto start = ctx.constant(elink::testing::random_tensor({2}, rng));
  const auto h0 = policy.init_history(ctx, src, start);
  ASSERT_EQ(h0.size(), 2u);
  PolicyNetwork<double>::History zero;
  for (int l = 0; l < 2; ++l) zero.push_back({ctx.constant(Tensor<double>({5})), ctx.constant(Tensor<double>({5}))});
  const auto manual = policy.encode_history(ctx, zero, ops::concat<double>({src, start}));
  for (int l = 0; l < 2; ++l) {
    EXPECT_EQ(h0[l].hidden.value(), manual[l].hidden.value());
    EXPECT_EQ(h0[l].cell.value(), manual[l].cell.value());
  }
  EXPECT_THROW((void)policy.encode_history(ctx, h0, src), DimensionError);
}

TEST(Policy, ActionDistributionSumsToOneAndRespectsMask) {
  Rng rng(9);
  for (int c = 0; c < 200; ++c) {
    PolicyConfig pc = tiny_policy();
    pc.lstm_layers = 1;
    ParamStore<double> store;
    Rng init(static_cast<std::uint64_t>(c));
    const PolicyNetwork<double> policy(pc, 2, store, init);
    Tape<double> tape(false);
    ForwardContext<double> ctx{tape, store, false, nullptr};
    const std::size_t n = 1 + rng.below(8);
    std::vector<bool> mask(n);
    for (std::size_t i = 0; i < n; ++i) mask[i] = rng.uniform() < 0.7;
    mask[rng.below(n)] = true;
    const PolicyNetwork<double>::History hist{{ctx.constant(elink::testing::random_tensor({5}, rng)), ctx.constant(Tensor<double>({5}))}};
    const auto p = policy
                       .action_distribution(ctx, hist, ctx.constant(elink::testing::random_tensor({2}, rng)),
                                            ctx.constant(elink::testing::random_tensor({2}, rng)),
                                            ctx.constant(elink::testing::random_tensor({n, 4}, rng, 3.0)), mask)
                       .value();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!mask[i]) {
        EXPECT_EQ(p[i], 0.0);
      }
      total += p[i];
    }
    ASSERT_NEAR(total, 1.0, 1e-9);
  }
}

TEST(Agent, ExpandScoresEveryAvailableAction) {
  Episode ep(kFacts, 5, EnvConfig{});
  const State s = ep.env.initial_state(0, 0);
  const auto h = ep.agent.start(0, 0);
  const auto ex = ep.agent.expand(s, h);
  EXPECT_EQ(ex.actions, ep.env.available_actions(s, ep.view));
  EXPECT_EQ(ex.log_probs.size(), ex.actions.size());
  double total = 0.0;
  for (double lp : ex.log_probs.value().data()) total += std::exp(lp);
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_GT(ex.entropy.item(), 0.0);
  EXPECT_LE(ex.entropy.item(), std::log(static_cast<double>(ex.actions.size())) + 1e-12);
}

TEST(Agent, FinalStepMasksOtherKnownAnswers) {
  EnvConfig ec;
  ec.horizon = 1;
  Episode ep(kFacts, 5, ec);
  const Triple q{0, 1, 2};
  const std::unordered_set<EntityId> known{1, 2};
  const auto ex = ep.agent.expand(ep.env.initial_state(0, 1), ep.agent.start(0, 1), &q, &known);
  for (const Action& a : ex.actions) EXPECT_NE(a.dest, 1u);
  bool has_answer = false;
  for (const Action& a : ex.actions) has_answer |= a.dest == 2;
  EXPECT_TRUE(has_answer);
  // Not the final step: nothing is removed.
  EnvConfig ec3;
  Episode ep3(kFacts, 5, ec3);
  const auto full = ep3.agent.expand(ep3.env.initial_state(0, 1), ep3.agent.start(0, 1), &q, &known);
  EXPECT_EQ(full.actions.size(), 3u);
}

TEST(Agent, UniformModeIsARandomWalk) {
  Episode ep(kFacts, 5, EnvConfig{});
  ep.agent.set_uniform(true);
  const auto ex = ep.agent.expand(ep.env.initial_state(0, 0), ep.agent.start(0, 0));
  for (double lp : ex.log_probs.value().data()) EXPECT_NEAR(lp, -std::log(3.0), 1e-15);
  EXPECT_TRUE(ex.action_vectors.empty());
}

TEST(Rollouts, ShapeRewardAndDeterminism) {
  Episode ep(kFacts, 5, EnvConfig{});
  const Triple q{0, 0, 3};
  RolloutOptions opt;
  opt.count = 16;
  Rng a(7), b(7);
  const auto ra = sample_rollouts(ep.agent, q, opt, a);
  const auto rb = sample_rollouts(ep.agent, q, opt, b);
  ASSERT_EQ(ra.size(), 16u);
  for (std::size_t i = 0; i < ra.size(); ++i) {
    EXPECT_EQ(ra[i].actions, rb[i].actions);
    EXPECT_EQ(ra[i].actions.size(), 3u);
    EXPECT_EQ(ra[i].log_probs.size(), 3u);
    EXPECT_EQ(ra[i].reward, ra[i].final_entity == 3 ? 1.0 : 0.0);
    EXPECT_LE(ra[i].log_likelihood(), 0.0);
    // Trajectories are walks of the graph.
    State s = ep.env.initial_state(0, 0);
    for (const Action& act : ra[i].actions) s = ep.env.step(s, act);
    EXPECT_EQ(s.current, ra[i].final_entity);
  }
}

TEST(Rollouts, ObjectiveMatchesClosedForm) {
  Tape<double> tape;
  std::vector<Rollout<double>> rs(2);
  auto scalar = [&](double v) { return tape.constant(Tensor<double>::scalar(v)); };
  rs[0].log_probs = {scalar(-0.5), scalar(-1.0)};
  rs[0].entropies = {scalar(0.7), scalar(0.2)};
  rs[0].reward = 1.0;
  rs[1].log_probs = {scalar(-2.0), scalar(-0.25)};
  rs[1].entropies = {scalar(0.4), scalar(0.1)};
  rs[1].reward = 0.25;
  const double beta = 0.05, b = 0.1;
  const double expected = -((1.0 - b) * (-1.5) + (0.25 - b) * (-2.25)) / 2.0 - beta * (0.9 + 0.5) / 2.0;
  EXPECT_NEAR(reinforce_objective(rs, beta, b).item(), expected, 1e-15);
  EXPECT_THROW((void)reinforce_objective(std::vector<Rollout<double>>{}, 0.0), std::invalid_argument);
}

TEST(Rollouts, ObjectiveGradientsMatchFiniteDifferences) {
  // Fixed sampling stream: small perturbations leave the sampled actions unchanged.
  for (std::uint64_t c = 0; c < 8; ++c) {
    Model<double> model(tiny_encoder(), tiny_policy(), 5, RelationSpace(2), c);
    const KnowledgeGraph graph = build_graph(kFacts, 5, RelationSpace(2), true);
    const Environment env(graph, EnvConfig{});
    const GraphView view(graph);
    const Triple q{0, 0, 3};
    auto fn = [&](Tape<double>& tape, const ParamStore<double>& store) {
      ForwardContext<double> ctx{tape, store, false, nullptr};
      EncodingSession<double> session(model.encoder(), ctx, view);
      Agent<double> agent(env, model.policy(), session);
      RolloutOptions opt;
      opt.count = 4;
      Rng rng(c, 11);
      return reinforce_objective(sample_rollouts(agent, q, opt, rng), 0.05, 0.1);
    };
    Rng pick(c);
    const auto r = elink::testing::check_gradients(model.store(), fn, pick, 8);
    EXPECT_LT(r.relative_error, 1e-4) << "config " << c;
  }
}

TEST(PolicyGradients, LstmStepFiniteDifferences) {
  const auto r = elink::testing::lstm_step_gradients(100);
  EXPECT_GE(r.configs, 100u);
  EXPECT_LT(r.worst, 1e-4) << r.worst_config;
}

TEST(PolicyGradients, PolicyHeadFiniteDifferences) {
  const auto r = elink::testing::policy_head_gradients(100);
  EXPECT_GE(r.configs, 100u);
  EXPECT_LT(r.worst, 1e-4) << r.worst_config;
}

TEST(Reinforce, MonteCarloGradientMatchesExactWithinThreeStandardErrors) {
  const auto r = elink::testing::reinforce_vs_exact(50000);
  EXPECT_GT(r.coordinates, 100u);
  EXPECT_LT(r.max_z, 3.0);
  EXPECT_LT(r.max_degenerate_gap, 1e-12);
  EXPECT_LT(r.objective_gap, 1e-10);
  EXPECT_LT(r.frequency_z, 4.0);
  double total = 0.0;
  for (const auto& [path, p] : r.exact_probability) total += p;
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_EQ(r.exact_probability.size(), 4u);
}
