#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "elink/harness/beam_search.hpp"
#include "elink/harness/metrics.hpp"
#include "elink/harness/model.hpp"
#include "elink/harness/relation_types.hpp"
#include "elink/kg/answer_index.hpp"
#include "elink/kg/pagerank.hpp"

namespace elink {

/// Graph with inverse edges, pruned to the top-k PageRank destinations per entity.
inline KnowledgeGraph build_pruned_graph(std::span<const Triple> triples, std::size_t num_entities, RelationSpace relations,
                                         std::size_t top_k) {
  const KnowledgeGraph full = build_graph(triples, num_entities, relations, true);
  return prune_actions(full, pagerank(full), top_k);
}

/// Runs `work(i)` for i in [0, n) on up to `threads` workers. The first
/// exception is rethrown after all workers stop.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& work) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) work(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(threads, n); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          work(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

struct EvalOptions {
  EnvConfig env;
  std::size_t beam_width = 256;
  std::size_t threads = 1;
  /// Remove the queried fact and its inverse from the graph while answering it.
  bool hide_query_edge = true;
  /// Score with a uniform policy instead of the model (random-walk baseline).
  bool uniform_policy = false;
};

struct QueryResult {
  Triple query;
  std::vector<RankedPrediction> predictions;
  std::optional<std::size_t> raw_rank;
  std::optional<std::size_t> filtered_rank;
};

/// Beam-decodes one query in inference mode (no dropout, no masking).
template <class Real>
std::vector<RankedPrediction> answer_query(const Model<Real>& model, const KnowledgeGraph& graph, const UnseenEmbeddings<Real>* unseen,
                                           const Triple& query, const EvalOptions& opt) {
  Tape<Real> tape(false);
  const ForwardContext<Real> ctx{tape, model.store(), false, nullptr};
  const GraphView view = opt.hide_query_edge ? GraphView::hiding_fact(graph, query) : GraphView(graph);
  EncodingSession<Real> session(model.encoder(), ctx, view, unseen);
  const Environment env(graph, opt.env);
  Agent<Real> agent(env, model.policy(), session);
  agent.set_uniform(opt.uniform_policy);
  return beam_search(agent, query.head, query.rel, opt.beam_width);
}

/// Answers every query (in parallel when requested); results keep query order.
template <class Real>
std::vector<QueryResult> run_queries(const Model<Real>& model, const KnowledgeGraph& graph, const UnseenEmbeddings<Real>* unseen,
                                     const std::vector<Triple>& queries, const AnswerIndex& known, const EvalOptions& opt) {
  std::vector<QueryResult> results(queries.size());
  parallel_for(queries.size(), opt.threads, [&](std::size_t i) {
    QueryResult r;
    r.query = queries[i];
    r.predictions = answer_query(model, graph, unseen, queries[i], opt);
    r.raw_rank = raw_rank(r.predictions, queries[i].tail);
    r.filtered_rank = filtered_rank(r.predictions, queries[i].tail, known.answers(queries[i].head, queries[i].rel));
    results[i] = std::move(r);
  });
  return results;
}

inline EvalReport make_report(const std::vector<QueryResult>& results, const RelationCardinality& card) {
  std::vector<Triple> queries;
  std::vector<std::optional<std::size_t>> ranks;
  for (const auto& r : results) {
    queries.push_back(r.query);
    ranks.push_back(r.filtered_rank);
  }
  EvalReport report;
  report.overall = summarize_ranks(ranks);
  relation_type_report(queries, ranks, card, report);
  return report;
}

/// Test-time data: the inference graph is train ∪ aux, unseen entities get
/// fixed Xavier base vectors, filtering uses train ∪ dev ∪ aux ∪ test.
struct InductiveEvalData {
  KnowledgeGraph graph;
  AnswerIndex known;
  std::vector<Triple> queries;
};

inline InductiveEvalData make_test_data(const InductiveSplit& split, RelationSpace relations, std::size_t top_k, bool inverse_queries) {
  std::vector<Triple> graph_triples = split.train;
  graph_triples.insert(graph_triples.end(), split.aux.begin(), split.aux.end());
  InductiveEvalData d{build_pruned_graph(graph_triples, split.num_entities, relations, top_k), {}, split.test};
  for (const auto* set : {&split.train, &split.dev, &split.aux, &split.test}) d.known.add(*set, relations, true);
  if (inverse_queries) {
    for (const Triple& t : split.test) d.queries.push_back({t.tail, relations.inverse(t.rel), t.head});
  }
  return d;
}

/// Dev-time data: the seen training graph only; filtering uses train ∪ dev.
inline InductiveEvalData make_dev_data(const InductiveSplit& split, RelationSpace relations, std::size_t top_k, std::size_t limit) {
  InductiveEvalData d{build_pruned_graph(split.train, split.num_entities, relations, top_k), {}, split.dev};
  d.known.add(split.train, relations, true);
  d.known.add(split.dev, relations, true);
  if (limit > 0 && d.queries.size() > limit) {
    // Evenly strided subset so the cap does not favor low entity ids.
    std::vector<Triple> subset;
    for (std::size_t i = 0; i < limit; ++i) subset.push_back(d.queries[i * d.queries.size() / limit]);
    d.queries = std::move(subset);
  }
  return d;
}

}  // namespace elink
