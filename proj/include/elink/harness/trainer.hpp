#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <vector>

#include "elink/harness/config.hpp"
#include "elink/harness/evaluate.hpp"
#include "elink/harness/model.hpp"
#include "elink/kg/split.hpp"
#include "elink/numerics/adam.hpp"
#include "elink/policy/rollout.hpp"
#include "elink/reward/conve.hpp"

namespace elink {

struct TrainEpoch {
  std::size_t epoch = 0;
  double loss = 0.0;
  double mean_reward = 0.0;
  double hit_rate = 0.0;
  double dev_mrr = std::numeric_limits<double>::quiet_NaN();
  double dev_hits1 = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  std::vector<TrainEpoch> history;
  std::size_t best_epoch = 0;
  double best_dev_mrr = -1.0;
};

/// Minibatch REINFORCE over the training triples (and their inverses):
/// encode → sample N rollouts → shaped terminal rewards with final-step
/// false-negative masking → objective → clip → Adam. After every epoch the dev
/// set is decoded with a small beam; the model is left holding the parameters
/// of the best dev epoch (the last epoch when there is no dev set).
template <class Real>
TrainResult train_agent(Model<Real>& model, const InductiveSplit& split, const ExperimentConfig& cfg, const ConvE<Real>* conve,
                        const std::function<void(const TrainEpoch&)>& on_epoch = {}) {
  const TrainConfig& tc = cfg.train;
  tc.validate();
  if (tc.use_reward_shaping && conve == nullptr) throw ConfigError("reward shaping is enabled but no ConvE checkpoint was provided");
  const RelationSpace rs = model.relations();
  const KnowledgeGraph graph = build_pruned_graph(split.train, split.num_entities, rs, cfg.env.top_k);
  const Environment env(graph, cfg.env);
  const AnswerIndex known(split.train, rs, true);
  const InductiveEvalData dev = make_dev_data(split, rs, cfg.env.top_k, tc.dev_limit);
  const RewardShaper shaper = tc.use_reward_shaping ? make_shaper(*conve) : RewardShaper{};

  std::vector<Triple> queries = split.train;
  if (tc.inverse_queries) {
    for (const Triple& t : split.train) queries.push_back({t.tail, rs.inverse(t.rel), t.head});
  }
  const std::size_t rollouts = model.policy().config().rollouts;
  const double beta = model.policy().config().entropy_weight;
  const double baseline = model.policy().config().use_baseline ? model.policy().config().baseline : 0.0;
  const double clip = model.policy().config().grad_clip;
  const AdamConfig adam{tc.learning_rate};
  const Rng root(tc.seed, 0x7EA1);

  EvalOptions dev_opt;
  dev_opt.env = cfg.env;
  dev_opt.beam_width = tc.dev_beam_width;
  dev_opt.threads = tc.threads;

  struct QueryOutcome {
    std::unique_ptr<Tape<Real>> tape;
    double loss = 0.0, reward = 0.0, hits = 0.0;
  };

  TrainResult result;
  std::vector<Tensor<Real>> best;
  std::vector<std::size_t> order(queries.size());
  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle = root.fork(epoch, 0);
    std::shuffle(order.begin(), order.end(), shuffle);
    double loss_sum = 0.0, reward_sum = 0.0, hit_sum = 0.0;

    for (std::size_t b = 0; b < order.size(); b += tc.batch_size) {
      const std::size_t e = std::min(order.size(), b + tc.batch_size);
      const Real inv_batch = Real{1} / static_cast<Real>(e - b);
      model.store().zero_grad();
      for (std::size_t c = b; c < e; c += tc.threads) {
        const std::size_t ce = std::min(e, c + tc.threads);
        std::vector<QueryOutcome> outcomes(ce - c);
        parallel_for(ce - c, tc.threads, [&](std::size_t k) {
          const std::size_t pos = c + k;
          const Triple& q = queries[order[pos]];
          Rng qrng = root.fork(epoch, pos + 1);
          Rng dropout = qrng.fork(1), sampler = qrng.fork(3);
          QueryOutcome out;
          out.tape = std::make_unique<Tape<Real>>();
          const ForwardContext<Real> ctx{*out.tape, model.store(), true, &dropout};
          EncodingSession<Real> session(model.encoder(), ctx, env.episode_view(q), nullptr, qrng.fork(2));
          const Agent<Real> agent(env, model.policy(), session);
          RolloutOptions ro;
          ro.count = rollouts;
          ro.known_answers = &known.answers(q.head, q.rel);
          ro.shaper = shaper ? &shaper : nullptr;
          const auto sampled = sample_rollouts(agent, q, ro, sampler);
          const Var<Real> loss = ops::scale(reinforce_objective(sampled, beta, baseline), inv_batch);
          out.tape->backward(loss);
          out.loss = static_cast<double>(loss.item());
          for (const auto& r : sampled) {
            out.reward += r.reward / static_cast<double>(sampled.size());
            out.hits += (r.final_entity == q.tail ? 1.0 : 0.0) / static_cast<double>(sampled.size());
          }
          outcomes[k] = std::move(out);
        });
        // Fixed accumulation order keeps results independent of the thread count.
        for (auto& o : outcomes) {
          o.tape->accumulate_into(model.store());
          loss_sum += o.loss;
          reward_sum += o.reward;
          hit_sum += o.hits;
        }
      }
      if (clip > 0.0) model.store().clip_grad_norm(clip);
      adam_step(model.store(), adam);
    }

    TrainEpoch rec;
    rec.epoch = epoch;
    const double nq = order.empty() ? 1.0 : static_cast<double>(order.size());
    const double nb = std::max<double>(1.0, std::ceil(nq / static_cast<double>(tc.batch_size)));
    rec.loss = loss_sum / nb;
    rec.mean_reward = reward_sum / nq;
    rec.hit_rate = hit_sum / nq;
    double selector = static_cast<double>(epoch);
    if (!dev.queries.empty()) {
      const auto summary = summarize_ranks([&] {
        std::vector<std::optional<std::size_t>> ranks;
        for (const auto& r : run_queries(model, dev.graph, static_cast<const UnseenEmbeddings<Real>*>(nullptr), dev.queries, dev.known, dev_opt)) {
          ranks.push_back(r.filtered_rank);
        }
        return ranks;
      }());
      rec.dev_mrr = summary.mrr;
      rec.dev_hits1 = summary.hits1;
      selector = summary.mrr;
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (selector > result.best_dev_mrr) {
      result.best_dev_mrr = selector;
      result.best_epoch = epoch;
      best.clear();
      for (const auto& entry : model.store().entries()) best.push_back(entry.value);
    }
  }
  if (dev.queries.empty()) result.best_dev_mrr = std::numeric_limits<double>::quiet_NaN();
  if (!best.empty()) {
    std::size_t i = 0;
    for (auto& entry : model.store().entries()) entry.value = best[i++];
  }
  return result;
}

}  // namespace elink
