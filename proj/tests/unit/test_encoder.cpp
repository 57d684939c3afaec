#include <cmath>
#include <memory>
#include <set>

#include <gtest/gtest.h>

#include "elink/encoder/graph_transformer.hpp"
#include "finite_difference.hpp"
#include "gradient_suites.hpp"

using namespace elink;
using elink::testing::check_gradients;
using elink::testing::project;

namespace {

struct Fixture {
  RelationSpace rs;
  KnowledgeGraph graph;
  ParamStore<double> store;
  GraphTransformer<double> encoder;
};

std::unique_ptr<Fixture> make_fixture(const EncoderConfig& cfg, std::size_t n, std::size_t base_rel, const std::vector<Triple>& facts,
                                      std::uint64_t seed) {
  auto f = std::make_unique<Fixture>();
  f->rs = RelationSpace(base_rel);
  f->graph = build_graph(facts, n, f->rs, true);
  Rng init(seed, 99);
  f->encoder = GraphTransformer<double>(cfg, f->store, n, f->rs, init);
  return f;
}

std::vector<Triple> random_facts(std::size_t n, std::size_t base_rel, std::size_t m, Rng& rng) {
  std::vector<Triple> out;
  while (out.size() < m) {
    Triple t{static_cast<EntityId>(rng.below(n)), static_cast<RelationId>(rng.below(base_rel)), static_cast<EntityId>(rng.below(n))};
    if (t.head != t.tail) out.push_back(t);
  }
  return out;
}

std::vector<Triple> path_facts(std::size_t n) {
  std::vector<Triple> out;
  for (EntityId e = 0; e + 1 < n; ++e) out.push_back({e, e % 2, e + 1});
  return out;
}

Tensor<double> encode_value(const Fixture& f, const GraphView& view, EntityId e, RelationId q) {
  Tape<double> tape(false);
  ForwardContext<double> ctx{tape, f.store, false, nullptr};
  EncodingSession<double> session(f.encoder, ctx, view);
  return session.encode(e, q).value();
}

EncoderConfig small_config(std::size_t dim, std::size_t heads, std::size_t layers) {
  EncoderConfig cfg;
  cfg.dim = dim;
  cfg.heads = heads;
  cfg.layers = layers;
  cfg.ffn_hidden = 2 * dim;
  return cfg;
}

}  // namespace

TEST(EncoderConfig, Validation) {
  EncoderConfig cfg = small_config(6, 4, 1);
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.heads = 3;
  EXPECT_NO_THROW(cfg.validate());
  cfg.dropout = 1.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  const EncoderConfig defaults;
  EXPECT_EQ(defaults.dim, 200u);
  EXPECT_EQ(defaults.layers, 1u);
  EXPECT_EQ(defaults.heads, 4u);
}

TEST(Encoder, AttentionWeightsSumToOneAndMatchOracle) {
  Rng rng(1, 2);
  for (int c = 0; c < 200; ++c) {
    const std::size_t heads = 1 + rng.below(3), dim = heads * (1 + rng.below(4));
    auto f = make_fixture(small_config(dim, heads, 1), 4, 3, {{0, 0, 1}}, static_cast<std::uint64_t>(c));
    Tape<double> tape(false);
    ForwardContext<double> ctx{tape, f->store, false, nullptr};
    const std::size_t n = 1 + rng.below(9);
    Tensor<double> rels({n, dim}), q({dim});
    for (double& x : rels.data()) x = rng.normal(0, 3);
    for (double& x : q.data()) x = rng.normal(0, 3);
    for (std::size_t h = 0; h < heads; ++h) {
      const auto w = f->encoder.attention_weights(ctx, ctx.constant(q), ctx.constant(rels), 0, h).value();
      double total = 0.0;
      for (double x : w.data()) total += x;
      ASSERT_NEAR(total, 1.0, 1e-9);
      // Oracle: softmax_n((W_K r_n)·(W_Q q) / sqrt(d_head)).
      const auto& lp = f->encoder.params().layers[0];
      const auto& wq = f->store.value(lp.query[h]);
      const auto& wk = f->store.value(lp.key[h]);
      const std::size_t dh = dim / heads;
      std::vector<double> qq(dh, 0.0), logits(n, 0.0);
      for (std::size_t i = 0; i < dh; ++i)
        for (std::size_t j = 0; j < dim; ++j) qq[i] += wq.at(i, j) * q[j];
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t i = 0; i < dh; ++i) {
          double k = 0.0;
          for (std::size_t j = 0; j < dim; ++j) k += wk.at(i, j) * rels.at(r, j);
          logits[r] += k * qq[i];
        }
        logits[r] /= std::sqrt(static_cast<double>(dh));
      }
      const double mx = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (double l : logits) z += std::exp(l - mx);
      for (std::size_t r = 0; r < n; ++r) ASSERT_NEAR(w[r], std::exp(logits[r] - mx) / z, 1e-12);
    }
  }
}

TEST(Encoder, AttentionRejectsEmptyNeighborhood) {
  auto f = make_fixture(small_config(4, 2, 1), 3, 2, {{0, 0, 1}}, 1);
  Tape<double> tape(false);
  ForwardContext<double> ctx{tape, f->store, false, nullptr};
  EXPECT_THROW((void)f->encoder.attention_weights(ctx, ctx.constant(Tensor<double>({4})), ctx.constant(Tensor<double>({0, 4})), 0, 0),
               std::invalid_argument);
}

TEST(Encoder, MessageMatchesOracle) {
  auto f = make_fixture(small_config(4, 2, 1), 3, 2, {{0, 0, 1}}, 3);
  Rng rng(5);
  Tape<double> tape(false);
  ForwardContext<double> ctx{tape, f->store, false, nullptr};
  Tensor<double> a({4}), r({4}), b({4});
  for (auto* t : {&a, &r, &b})
    for (double& x : t->data()) x = rng.normal();
  const auto m = f->encoder.message(ctx, ctx.constant(a), ctx.constant(r), ctx.constant(b), 0).value();
  const auto& w = f->store.value(f->encoder.params().layers[0].message);
  for (std::size_t i = 0; i < 4; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 4; ++j) s += w.at(i, j) * a[j] + w.at(i, 4 + j) * r[j] + w.at(i, 8 + j) * b[j];
    EXPECT_NEAR(m[i], s > 0 ? s : 0.01 * s, 1e-12);
  }
  EXPECT_THROW((void)f->encoder.message(ctx, ctx.constant(Tensor<double>({3})), ctx.constant(r), ctx.constant(b), 0), DimensionError);
}

TEST(Encoder, IsolatedEntityPassesStraightToTransformerBlock) {
  auto f = make_fixture(small_config(4, 2, 1), 4, 2, {{0, 0, 1}}, 4);
  const GraphView view(f->graph);
  Tape<double> tape(false);
  ForwardContext<double> ctx{tape, f->store, false, nullptr};
  EncodingSession<double> session(f->encoder, ctx, view);
  const auto g = session.encode(3, 0).value();
  EXPECT_TRUE(session.isolated(3, 0));
  const auto expected = f->encoder.transformer_block(ctx, session.base(3), 0).value();
  EXPECT_EQ(g, expected);
}

TEST(Encoder, QueryRelationConditionsEncoding) {
  auto f = make_fixture(small_config(8, 2, 1), 4, 3, {{0, 0, 1}, {0, 1, 2}, {0, 2, 3}}, 6);
  const GraphView view(f->graph);
  const auto a = encode_value(*f, view, 0, 0);
  const auto b = encode_value(*f, view, 0, 2);
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += std::abs(a[i] - b[i]);
  EXPECT_GT(diff, 1e-6);
}

TEST(Encoder, LocalityUnderPerturbationBeyondLHops) {
  for (EntityId layers : {1u, 2u}) {
    auto f = make_fixture(small_config(8, 2, layers), 7, 2, path_facts(7), 10 + layers);
    const GraphView view(f->graph);
    const auto reference = encode_value(*f, view, 0, 1);
    auto& table = f->store.value(f->encoder.params().entity_table);
    for (EntityId e = 1; e < 7; ++e) {
      const auto saved = std::vector<double>(table.row(e).begin(), table.row(e).end());
      for (double& x : table.row(e)) x += 0.5;
      const auto perturbed = encode_value(*f, view, 0, 1);
      if (e > layers) {
        EXPECT_EQ(perturbed, reference) << "L=" << layers << " entity " << e;
      } else {
        EXPECT_NE(perturbed, reference) << "L=" << layers << " entity " << e;
      }
      std::copy(saved.begin(), saved.end(), table.row(e).begin());
    }
    // Structural perturbation beyond the horizon: extra edges between far entities.
    auto facts = path_facts(7);
    facts.push_back({layers + 1, 0, 6});
    facts.push_back({layers + 2, 1, 5});
    Fixture g;
    g.rs = f->rs;
    g.graph = build_graph(facts, 7, g.rs, true);
    const GraphView view2(g.graph);
    Tape<double> tape(false);
    ForwardContext<double> ctx{tape, f->store, false, nullptr};
    EncodingSession<double> session(f->encoder, ctx, view2);
    EXPECT_EQ(session.encode(0, 1).value(), reference);
  }
}

TEST(Encoder, HiddenEdgesAreInvisible) {
  auto f = make_fixture(small_config(4, 2, 1), 4, 2, {{0, 0, 1}, {0, 1, 2}}, 8);
  const auto hidden = encode_value(*f, GraphView::hiding_fact(f->graph, {0, 1, 2}), 0, 0);
  const KnowledgeGraph reduced = build_graph(std::vector<Triple>{{0, 0, 1}}, 4, f->rs, true);
  EXPECT_EQ(hidden, encode_value(*f, GraphView(reduced), 0, 0));
}

TEST(Encoder, TrainingMaskIsDeterministicPerStream) {
  EncoderConfig cfg = small_config(4, 2, 1);
  cfg.mask_fraction = 0.5;
  Rng frng(3);
  auto f = make_fixture(cfg, 9, 2, random_facts(9, 2, 30, frng), 8);
  const GraphView view(f->graph);
  Tape<double> tape(false);
  Rng drop(1);
  ForwardContext<double> ctx{tape, f->store, true, &drop};
  EncodingSession<double> a(f->encoder, ctx, view, nullptr, Rng(4, 4)), b(f->encoder, ctx, view, nullptr, Rng(4, 4));
  for (EntityId e = 0; e < 9; ++e) {
    const auto full = view.edges(e);
    const auto na = a.neighborhood(e, 0, 0);
    EXPECT_EQ(na, b.neighborhood(e, 0, 0));
    std::set<EntityId> distinct;
    for (const Edge& x : full) distinct.insert(x.dest);
    std::set<EntityId> kept;
    for (const Edge& x : na) kept.insert(x.dest);
    if (!distinct.empty()) {
      const std::size_t removed = std::min<std::size_t>(distinct.size() / 2, distinct.size() - 1);
      EXPECT_EQ(kept.size(), distinct.size() - removed);
    }
  }
  // Evaluation never masks.
  ForwardContext<double> eval{tape, f->store, false, nullptr};
  EncodingSession<double> c(f->encoder, eval, view, nullptr, Rng(4, 4));
  EXPECT_EQ(c.neighborhood(0, 0, 0), view.edges(0));
}

TEST(UnseenEmbeddings, FixedPerEntityAndSeed) {
  std::vector<bool> seen(400, true);
  for (EntityId e = 0; e < 400; e += 2) seen[e] = false;
  const UnseenEmbeddings<double> a(seen, 64, 7), b(seen, 64, 7), c(seen, 64, 8);
  EXPECT_EQ(a.vector(0), b.vector(0));
  EXPECT_NE(a.vector(0), c.vector(0));
  EXPECT_NE(a.vector(0), a.vector(2));
  EXPECT_THROW((void)a.vector(1), std::out_of_range);
  double ss = 0.0;
  std::size_t n = 0;
  for (EntityId e = 0; e < 400; e += 2)
    for (double x : a.vector(e).data()) ss += x * x, ++n;
  // Xavier normal with fan_in = fan_out = d: variance 1/d.
  EXPECT_NEAR(ss / static_cast<double>(n), 1.0 / 64.0, 0.1 / 64.0);
}

TEST(Encoder, UnseenEntityUsesFixedVectorNotTableRow) {
  auto f = make_fixture(small_config(4, 2, 1), 3, 2, {{0, 0, 1}, {2, 1, 0}}, 9);
  const std::vector<bool> seen{true, true, false};
  const UnseenEmbeddings<double> unseen(seen, 4, 3);
  const GraphView view(f->graph);
  Tape<double> tape(false);
  ForwardContext<double> ctx{tape, f->store, false, nullptr};
  EncodingSession<double> session(f->encoder, ctx, view, &unseen);
  EXPECT_EQ(session.base(2).value(), unseen.vector(2));
  const auto before = session.encode(2, 0).value();
  for (double& x : f->store.value(f->encoder.params().entity_table).row(2)) x += 1.0;
  EncodingSession<double> again(f->encoder, ctx, view, &unseen);
  EXPECT_EQ(again.encode(2, 0).value(), before);
}

// 100+ random configurations of the full encoder block (attention, aggregation,
// LayerNorm/FFN; one and two layers; with and without fixed dropout/masking).
TEST(EncoderGradients, FiniteDifferencesOverRandomConfigurations) {
  const auto r = elink::testing::encoder_block_gradients(104);
  EXPECT_GE(r.configs, 100u);
  EXPECT_LT(r.worst, 1e-4) << r.worst_config;
  RecordProperty("worst_relative_error", std::to_string(r.worst));
}
