#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "elink/kg/graph_view.hpp"
#include "elink/kg/pagerank.hpp"
#include "elink/kg/types.hpp"
#include "elink/numerics/context.hpp"
#include "elink/numerics/ops.hpp"
#include "elink/numerics/params.hpp"

namespace elink {

struct EncoderConfig {
  std::size_t dim = 200;
  std::size_t heads = 4;
  std::size_t layers = 1;
  /// Zero selects 2 * dim.
  std::size_t ffn_hidden = 0;
  double leaky_slope = 0.01;
  double dropout = 0.1;
  /// Fraction of neighbors masked per neighborhood during training.
  double mask_fraction = 0.5;
  double layer_norm_eps = 1e-5;

  std::size_t head_dim() const { return dim / heads; }
  std::size_t ffn_width() const { return ffn_hidden ? ffn_hidden : 2 * dim; }

  void validate() const {
    if (dim == 0 || heads == 0 || layers == 0) throw std::invalid_argument("EncoderConfig: dim, heads and layers must be positive");
    if (dim % heads != 0) {
      throw std::invalid_argument("EncoderConfig: heads (" + std::to_string(heads) + ") must divide dim (" + std::to_string(dim) + ")");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("EncoderConfig: dropout must lie in [0, 1)");
    if (!(mask_fraction >= 0.0 && mask_fraction < 1.0)) throw std::invalid_argument("EncoderConfig: mask_fraction must lie in [0, 1)");
  }
};

/// Parameter handles of the encoder inside a ParamStore.
struct EncoderParams {
  ParamId entity_table;    // (num_entities, d); rows of unseen entities are never read
  ParamId relation_table;  // (2R + 3, d)
  struct Layer {
    ParamId message;  // W_f (d, 3d)
    std::vector<ParamId> query, key, value;  // per head (d_head, d)
    ParamId ffn_in, ffn_in_bias, ffn_out, ffn_out_bias;
    ParamId ln1_gain, ln1_bias, ln2_gain, ln2_bias;
  };
  std::vector<Layer> layers;
};

/// Fixed random base vectors for entities absent from training, drawn once
/// per evaluation session from N(0, 2 / (d + d)) and keyed by entity id.
template <class Real>
class UnseenEmbeddings {
 public:
  UnseenEmbeddings() = default;
  UnseenEmbeddings(const std::vector<bool>& seen_mask, std::size_t dim, std::uint64_t seed) : seen_(seen_mask), dim_(dim) {
    const Rng root(seed, 0xE11E);
    for (EntityId e = 0; e < seen_.size(); ++e) {
      if (seen_[e]) continue;
      Rng rng = root.fork(e);
      vectors_.emplace(e, xavier_normal<Real>({dim}, dim, dim, rng));
    }
  }

  bool is_seen(EntityId e) const { return e < seen_.size() ? static_cast<bool>(seen_[e]) : false; }
  bool empty() const noexcept { return seen_.empty(); }
  const Tensor<Real>& vector(EntityId e) const {
    auto it = vectors_.find(e);
    if (it == vectors_.end()) throw std::out_of_range("UnseenEmbeddings: entity " + std::to_string(e) + " is seen or unknown");
    return it->second;
  }

 private:
  std::vector<bool> seen_;
  std::size_t dim_ = 0;
  std::map<EntityId, Tensor<Real>> vectors_;
};

/// Query-conditioned Graph Transformer: multi-head attention over relational
/// neighborhood messages followed by a LayerNorm/FFN block.
template <class Real>
class GraphTransformer {
 public:
  GraphTransformer() = default;

  /// Registers parameters under "encoder." in `store`.
  GraphTransformer(const EncoderConfig& cfg, ParamStore<Real>& store, std::size_t num_entities, RelationSpace relations, Rng& init)
      : cfg_(cfg), relations_(relations), num_entities_(num_entities) {
    cfg_.validate();
    const std::size_t d = cfg_.dim, dh = cfg_.head_dim(), f = cfg_.ffn_width();
    params_.entity_table = store.add("encoder.entity_table", xavier_normal<Real>({num_entities, d}, d, d, init));
    params_.relation_table = store.add("encoder.relation_table", xavier_normal<Real>({relations.total(), d}, d, d, init));
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      const std::string p = "encoder.layer" + std::to_string(l) + ".";
      EncoderParams::Layer layer;
      layer.message = store.add(p + "message", xavier_matrix<Real>(d, 3 * d, init));
      for (std::size_t h = 0; h < cfg_.heads; ++h) {
        const std::string hp = p + "head" + std::to_string(h) + ".";
        layer.query.push_back(store.add(hp + "query", xavier_matrix<Real>(dh, d, init)));
        layer.key.push_back(store.add(hp + "key", xavier_matrix<Real>(dh, d, init)));
        layer.value.push_back(store.add(hp + "value", xavier_matrix<Real>(dh, d, init)));
      }
      layer.ffn_in = store.add(p + "ffn_in", xavier_matrix<Real>(f, d, init));
      layer.ffn_in_bias = store.add(p + "ffn_in_bias", Tensor<Real>({f}));
      layer.ffn_out = store.add(p + "ffn_out", xavier_matrix<Real>(d, f, init));
      layer.ffn_out_bias = store.add(p + "ffn_out_bias", Tensor<Real>({d}));
      layer.ln1_gain = store.add(p + "ln1_gain", Tensor<Real>({d}, Real{1}));
      layer.ln1_bias = store.add(p + "ln1_bias", Tensor<Real>({d}));
      layer.ln2_gain = store.add(p + "ln2_gain", Tensor<Real>({d}, Real{1}));
      layer.ln2_bias = store.add(p + "ln2_bias", Tensor<Real>({d}));
      params_.layers.push_back(std::move(layer));
    }
  }

  const EncoderConfig& config() const noexcept { return cfg_; }
  const EncoderParams& params() const noexcept { return params_; }
  const RelationSpace& relations() const noexcept { return relations_; }
  std::size_t num_entities() const noexcept { return num_entities_; }

  /// m = LeakyReLU(W_f [e_i; r; e_j]). Accepts d-vectors or (n, d) row batches.
  Var<Real> message(const ForwardContext<Real>& ctx, const Var<Real>& e_i, const Var<Real>& r, const Var<Real>& e_j,
                    std::size_t layer) const {
    const std::size_t d = cfg_.dim;
    for (const Var<Real>* v : {&e_i, &r, &e_j}) {
      if (v->value().last_dim() != d) throw_dimension_error("message", v->shape(), Shape{d});
    }
    const Var<Real> x = ops::concat<Real>({e_i, r, e_j});
    return ops::leaky_relu(ops::linear(x, ctx.param(params_.layers.at(layer).message)), static_cast<Real>(cfg_.leaky_slope));
  }

  /// α over the n neighbor relations (rows of `neighbor_rels`) for one head:
  /// softmax of (W_Q r_q)ᵀ(W_K r) / √d_head.
  Var<Real> attention_weights(const ForwardContext<Real>& ctx, const Var<Real>& query_rel, const Var<Real>& neighbor_rels,
                              std::size_t layer, std::size_t head) const {
    if (neighbor_rels.value().rank() != 2 || neighbor_rels.value().dim(0) == 0) {
      throw std::invalid_argument("attention_weights: empty neighborhood");
    }
    const auto& lp = params_.layers.at(layer);
    const Var<Real> q = ops::linear(query_rel, ctx.param(lp.query.at(head)));
    const Var<Real> k = ops::linear(neighbor_rels, ctx.param(lp.key.at(head)));
    const Real inv_sqrt = Real{1} / std::sqrt(static_cast<Real>(cfg_.head_dim()));
    return ops::softmax(ops::scale(ops::matmul(k, q), inv_sqrt));
  }

  /// ê = e_i + ‖_heads Σ α_n · W_V^n m, with dropout on the residual branch when training.
  Var<Real> aggregate(const ForwardContext<Real>& ctx, const Var<Real>& e_i, const Var<Real>& messages,
                      const std::vector<Var<Real>>& weights, std::size_t layer) const {
    const auto& lp = params_.layers.at(layer);
    if (weights.size() != cfg_.heads) {
      throw DimensionError("aggregate: " + std::to_string(weights.size()) + " weight vectors for " + std::to_string(cfg_.heads) + " heads");
    }
    std::vector<Var<Real>> heads;
    for (std::size_t h = 0; h < cfg_.heads; ++h) {
      const Var<Real> values = ops::linear(messages, ctx.param(lp.value[h]));  // (n, d_head)
      heads.push_back(ops::matmul(weights[h], values));
    }
    Var<Real> update = ops::concat(heads);
    if (ctx.training) update = ops::dropout(update, cfg_.dropout, ctx.stream(), true);
    return ops::add(e_i, update);
  }

  /// g = LN(FFN(LN(ê)) + LN(ê)).
  Var<Real> transformer_block(const ForwardContext<Real>& ctx, const Var<Real>& e_hat, std::size_t layer) const {
    const auto& lp = params_.layers.at(layer);
    const Real eps = static_cast<Real>(cfg_.layer_norm_eps);
    const Var<Real> normed = ops::layer_norm(e_hat, ctx.param(lp.ln1_gain), ctx.param(lp.ln1_bias), eps);
    Var<Real> hidden = ops::relu(ops::add(ops::linear(normed, ctx.param(lp.ffn_in)), ctx.param(lp.ffn_in_bias)));
    if (ctx.training) hidden = ops::dropout(hidden, cfg_.dropout, ctx.stream(), true);
    const Var<Real> ffn = ops::add(ops::linear(hidden, ctx.param(lp.ffn_out)), ctx.param(lp.ffn_out_bias));
    return ops::layer_norm(ops::add(ffn, normed), ctx.param(lp.ln2_gain), ctx.param(lp.ln2_bias), eps);
  }

 private:
  EncoderConfig cfg_;
  RelationSpace relations_;
  std::size_t num_entities_ = 0;
  EncoderParams params_;
};

/// Memoized encodings for one episode (one query over one graph view).
/// Layer l of an entity consumes layer l-1 of itself and its neighbors.
template <class Real>
class EncodingSession {
 public:
  EncodingSession(const GraphTransformer<Real>& encoder, const ForwardContext<Real>& ctx, const GraphView& view,
                  const UnseenEmbeddings<Real>* unseen = nullptr, Rng mask_stream = Rng(0, 0))
      : encoder_(&encoder), ctx_(ctx), view_(view), unseen_(unseen), mask_stream_(mask_stream) {}

  const ForwardContext<Real>& context() const noexcept { return ctx_; }
  const GraphView& view() const noexcept { return view_; }

  /// Query-conditioned top-layer encoding g^L of `entity`.
  Var<Real> encode(EntityId entity, RelationId query_rel) { return encode_at(entity, query_rel, encoder_->config().layers); }

  /// Relation embedding (dropout applied once per session when training).
  Var<Real> relation(RelationId r) {
    if (auto it = relations_.find(r); it != relations_.end()) return it->second;
    Var<Real> v = ops::gather_row(ctx_.param(encoder_->params().relation_table), r);
    if (ctx_.training) v = ops::dropout(v, encoder_->config().dropout, ctx_.stream(), true);
    relations_.emplace(r, v);
    return v;
  }

  /// Layer-0 vector: table row for seen entities, fixed random vector otherwise.
  Var<Real> base(EntityId e) {
    if (auto it = bases_.find(e); it != bases_.end()) return it->second;
    Var<Real> v;
    if (unseen_ != nullptr && !unseen_->empty() && !unseen_->is_seen(e)) {
      v = ctx_.constant(unseen_->vector(e));
    } else {
      v = ops::gather_row(ctx_.param(encoder_->params().entity_table), e);
      if (ctx_.training) v = ops::dropout(v, encoder_->config().dropout, ctx_.stream(), true);
    }
    bases_.emplace(e, v);
    return v;
  }

  /// True when the entity had no neighbor to aggregate for this query.
  bool isolated(EntityId e, RelationId query_rel) const {
    auto it = isolated_.find({e, query_rel});
    return it != isolated_.end() && it->second;
  }

  /// Neighbor edges consumed at `layer` (after masking during training).
  std::vector<Edge> neighborhood(EntityId e, RelationId query_rel, std::size_t layer) {
    std::vector<Edge> edges = view_.edges(e);
    if (ctx_.training && encoder_->config().mask_fraction > 0.0) {
      Rng rng = mask_stream_.fork(e, query_rel, layer);
      edges = sample_neighbor_mask(edges, encoder_->config().mask_fraction, rng);
    }
    return edges;
  }

 private:
  Var<Real> encode_at(EntityId e, RelationId q, std::size_t layer) {
    if (layer == 0) return base(e);
    const auto key = std::make_tuple(e, q, layer);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;

    const std::size_t l = layer - 1;
    const Var<Real> self = encode_at(e, q, l);
    const std::vector<Edge> edges = neighborhood(e, q, l);
    Var<Real> e_hat = self;
    if (edges.empty()) {
      isolated_[{e, q}] = true;
    } else {
      std::vector<Var<Real>> rel_rows, nbr_rows;
      for (const Edge& x : edges) {
        rel_rows.push_back(relation(x.rel));
        nbr_rows.push_back(encode_at(x.dest, q, l));
      }
      const Var<Real> rels = ops::stack_rows(rel_rows);
      const Var<Real> nbrs = ops::stack_rows(nbr_rows);
      const Var<Real> msgs = encoder_->message(ctx_, ops::broadcast_rows(self, edges.size()), rels, nbrs, l);
      const Var<Real> query = relation(q);
      std::vector<Var<Real>> weights;
      for (std::size_t h = 0; h < encoder_->config().heads; ++h) weights.push_back(encoder_->attention_weights(ctx_, query, rels, l, h));
      e_hat = encoder_->aggregate(ctx_, self, msgs, weights, l);
    }
    const Var<Real> g = encoder_->transformer_block(ctx_, e_hat, l);
    memo_.emplace(key, g);
    return g;
  }

  const GraphTransformer<Real>* encoder_;
  ForwardContext<Real> ctx_;
  GraphView view_;
  const UnseenEmbeddings<Real>* unseen_;
  Rng mask_stream_;
  std::map<std::tuple<EntityId, RelationId, std::size_t>, Var<Real>> memo_;
  std::map<EntityId, Var<Real>> bases_;
  std::map<RelationId, Var<Real>> relations_;
  std::map<std::pair<EntityId, RelationId>, bool> isolated_;
};

}  // namespace elink
