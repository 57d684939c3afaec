#pragma once

// Randomized finite-difference suites for the differentiable blocks. Each
// returns how many configurations were checked and the worst relative error.

#include <algorithm>
#include <memory>
#include <string>

#include "elink/encoder/graph_transformer.hpp"
#include "elink/policy/policy_network.hpp"
#include "elink/reward/conve.hpp"
#include "finite_difference.hpp"

namespace elink::testing {

struct GradSuiteResult {
  std::size_t configs = 0;
  double worst = 0.0;
  std::string worst_config;

  void record(double err, std::string what) {
    ++configs;
    if (err > worst || configs == 1) {
      worst = err;
      worst_config = std::move(what);
    }
  }
};

inline Tensor<double> random_tensor(Shape shape, Rng& rng, double sd = 1.0) {
  Tensor<double> t(std::move(shape));
  for (double& x : t.data()) x = rng.normal(0.0, sd);
  return t;
}

inline std::vector<Triple> random_facts(std::size_t n, std::size_t base_rel, std::size_t m, Rng& rng) {
  std::vector<Triple> out;
  while (out.size() < m) {
    Triple t{static_cast<EntityId>(rng.below(n)), static_cast<RelationId>(rng.below(base_rel)), static_cast<EntityId>(rng.below(n))};
    if (t.head != t.tail) out.push_back(t);
  }
  return out;
}

/// Query-conditioned encoding g^L through attention, aggregation and the
/// LayerNorm/FFN block; one or two layers; odd configurations run in training
/// mode with fixed dropout and neighbour-mask streams.
inline GradSuiteResult encoder_block_gradients(std::size_t configs, std::uint64_t seed = 2024) {
  Rng rng(seed, 5);
  GradSuiteResult out;
  for (std::uint64_t c = 0; c < configs; ++c) {
    EncoderConfig cfg;
    cfg.heads = 1 + rng.below(2);
    cfg.dim = cfg.heads * (2 + rng.below(2));
    cfg.layers = 1 + rng.below(2);
    cfg.ffn_hidden = 2 * cfg.dim;
    const bool training = c % 2 == 1;
    cfg.dropout = training ? 0.2 : 0.0;
    cfg.mask_fraction = training ? 0.3 : 0.0;
    const std::size_t n = 4 + rng.below(4), base_rel = 2 + rng.below(2);
    const RelationSpace rs(base_rel);
    const KnowledgeGraph graph = build_graph(random_facts(n, base_rel, n + rng.below(n), rng), n, rs, true);
    ParamStore<double> store;
    Rng init(c, 99);
    const GraphTransformer<double> encoder(cfg, store, n, rs, init);
    // Move LayerNorm gains/biases and FFN biases off their trivial initial values.
    for (const auto& lp : encoder.params().layers)
      for (ParamId p : {lp.ln1_gain, lp.ln1_bias, lp.ln2_gain, lp.ln2_bias, lp.ffn_in_bias, lp.ffn_out_bias})
        for (double& x : store.value(p).data()) x += rng.normal(0.0, 0.3);
    const GraphView view(graph);
    const auto target = static_cast<EntityId>(rng.below(n));
    const auto q = static_cast<RelationId>(rng.below(2 * base_rel));
    auto fn = [&](Tape<double>& tape, const ParamStore<double>& s) {
      Rng drop(c, 77);
      ForwardContext<double> ctx{tape, s, training, &drop};
      EncodingSession<double> session(encoder, ctx, view, nullptr, Rng(c, 78));
      return project(session.encode(target, q), c);
    };
    const auto r = check_gradients(store, fn, rng, 12);
    out.record(r.relative_error, "encoder config " + std::to_string(c) + " dim " + std::to_string(cfg.dim) + " layers " +
                                     std::to_string(cfg.layers));
  }
  return out;
}

/// One stacked-LSTM step (1-3 layers) on random inputs and states.
inline GradSuiteResult lstm_step_gradients(std::size_t configs, std::uint64_t seed = 31) {
  Rng rng(seed, 6);
  GradSuiteResult out;
  for (std::uint64_t c = 0; c < configs; ++c) {
    PolicyConfig pc;
    pc.lstm_layers = 1 + rng.below(3);
    const std::size_t dim = 1 + rng.below(3);
    pc.lstm_hidden = 1 + rng.below(4);
    ParamStore<double> store;
    Rng init(c, 3);
    const PolicyNetwork<double> policy(pc, dim, store, init);
    for (const auto& l : policy.params().lstm)
      for (double& x : store.value(l.bias).data()) x = rng.normal(0.0, 0.5);
    const ParamId action = store.add("input.action", random_tensor({2 * dim}, rng));
    std::vector<std::pair<ParamId, ParamId>> states;
    for (std::size_t l = 0; l < pc.lstm_layers; ++l) {
      states.emplace_back(store.add("input.h" + std::to_string(l), random_tensor({pc.lstm_hidden}, rng, 0.5)),
                          store.add("input.c" + std::to_string(l), random_tensor({pc.lstm_hidden}, rng, 0.5)));
    }
    auto fn = [&](Tape<double>& tape, const ParamStore<double>& s) {
      const ForwardContext<double> ctx{tape, s, false, nullptr};
      PolicyNetwork<double>::History prev;
      for (const auto& [h, cell] : states) prev.push_back({ctx.param(h), ctx.param(cell)});
      const auto next = policy.encode_history(ctx, prev, ctx.param(action));
      std::vector<Var<double>> parts;
      for (const auto& st : next) {
        parts.push_back(st.hidden);
        parts.push_back(st.cell);
      }
      return project(ops::concat(parts), c);
    };
    const auto r = check_gradients(store, fn, rng, 16);
    out.record(r.relative_error, "lstm config " + std::to_string(c));
  }
  return out;
}

/// log π over random action rows through W_1, ReLU, W_2 and the action product,
/// with the history, current entity, query and actions as free inputs.
inline GradSuiteResult policy_head_gradients(std::size_t configs, std::uint64_t seed = 47) {
  Rng rng(seed, 7);
  GradSuiteResult out;
  for (std::uint64_t c = 0; c < configs; ++c) {
    PolicyConfig pc;
    pc.lstm_layers = 1;
    const std::size_t dim = 1 + rng.below(3);
    pc.lstm_hidden = 1 + rng.below(4);
    pc.mlp_hidden = 2 + rng.below(4);
    const std::size_t n = 1 + rng.below(5);
    ParamStore<double> store;
    Rng init(c, 4);
    const PolicyNetwork<double> policy(pc, dim, store, init);
    const ParamId h = store.add("input.h", random_tensor({pc.lstm_hidden}, rng));
    const ParamId cur = store.add("input.current", random_tensor({dim}, rng));
    const ParamId q = store.add("input.query", random_tensor({dim}, rng));
    const ParamId acts = store.add("input.actions", random_tensor({n, 2 * dim}, rng));
    const std::size_t picked = rng.below(n);
    const bool use_entropy = c % 2 == 0;
    auto fn = [&](Tape<double>& tape, const ParamStore<double>& s) {
      const ForwardContext<double> ctx{tape, s, false, nullptr};
      const PolicyNetwork<double>::History hist{{ctx.param(h), ctx.constant(Tensor<double>({pc.lstm_hidden}))}};
      const auto lp = policy.log_probs(ctx, hist, ctx.param(cur), ctx.param(q), ctx.param(acts));
      return use_entropy ? ops::add(ops::pick(lp, picked), ops::entropy_from_log_probs(lp)) : project(lp, c);
    };
    const auto r = check_gradients(store, fn, rng, 16);
    out.record(r.relative_error, "policy head config " + std::to_string(c));
  }
  return out;
}

/// 1-vs-all BCE with label smoothing over ConvE logits; odd configurations
/// run in training mode with fixed dropout masks.
inline GradSuiteResult conve_forward_gradients(std::size_t configs, std::uint64_t seed = 59) {
  Rng rng(seed, 8);
  GradSuiteResult out;
  for (std::uint64_t c = 0; c < configs; ++c) {
    ConvEConfig cfg;
    cfg.rows = 2 + rng.below(2);
    cfg.cols = 3 + rng.below(2);
    cfg.embed_dim = cfg.rows * cfg.cols;
    cfg.channels = 1 + rng.below(3);
    cfg.kernel = 2 + rng.below(2);
    const bool training = c % 2 == 1;
    const std::size_t n = 3 + rng.below(4);
    std::vector<EntityId> entities(n);
    for (std::size_t i = 0; i < n; ++i) entities[i] = static_cast<EntityId>(2 * i);
    ConvE<double> model(cfg, entities, RelationSpace(2), c);
    for (ParamId p : {model.params().conv_bias, model.params().projection_bias, model.params().entity_bias})
      for (double& x : model.store().value(p).data()) x = rng.normal(0.0, 0.5);
    const EntityId subject = entities[rng.below(n)];
    const auto rel = static_cast<RelationId>(rng.below(4));
    Tensor<double> targets({n});
    for (double& x : targets.data()) x = rng.uniform() < 0.3 ? 0.9 : 0.1 / static_cast<double>(n);
    auto fn = [&](Tape<double>& tape, const ParamStore<double>& s) {
      Rng drop(c, 5);
      const ForwardContext<double> ctx{tape, s, training, &drop};
      return ops::bce_with_logits(model.score_all(ctx, subject, rel), targets);
    };
    const auto r = check_gradients(model.store(), fn, rng, 16);
    out.record(r.relative_error, "conve config " + std::to_string(c));
  }
  return out;
}

}  // namespace elink::testing
