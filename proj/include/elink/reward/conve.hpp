#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "elink/env/environment.hpp"
#include "elink/kg/types.hpp"
#include "elink/log.hpp"
#include "elink/numerics/adam.hpp"
#include "elink/numerics/checkpoint.hpp"
#include "elink/numerics/context.hpp"
#include "elink/numerics/ops.hpp"

namespace elink {

struct ConvEConfig {
  std::size_t embed_dim = 32;
  std::size_t rows = 4;
  std::size_t cols = 8;
  std::size_t channels = 8;
  std::size_t kernel = 3;
  double input_dropout = 0.2;
  double feature_dropout = 0.2;
  double hidden_dropout = 0.3;
  double label_smoothing = 0.1;

  std::size_t conv_rows() const { return 2 * rows - kernel + 1; }
  std::size_t conv_cols() const { return cols - kernel + 1; }
  std::size_t flat_width() const { return channels * conv_rows() * conv_cols(); }

  void validate() const {
    if (rows * cols != embed_dim) {
      throw std::invalid_argument("ConvEConfig: reshape " + std::to_string(rows) + "x" + std::to_string(cols) + " does not factor embed_dim " +
                                  std::to_string(embed_dim));
    }
    if (kernel == 0 || kernel > 2 * rows || kernel > cols) throw std::invalid_argument("ConvEConfig: kernel does not fit the stacked input");
    if (channels == 0) throw std::invalid_argument("ConvEConfig: channels must be positive");
    if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) throw std::invalid_argument("ConvEConfig: label_smoothing must lie in [0, 1)");
    for (double p : {input_dropout, feature_dropout, hidden_dropout}) {
      if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("ConvEConfig: dropout rates must lie in [0, 1)");
    }
  }
};

struct ConvEParams {
  ParamId entity_table;    // (seen entities, embed_dim)
  ParamId relation_table;  // (2R, embed_dim): base relations and their inverses
  ParamId kernel;          // (channels, 1, k, k)
  ParamId conv_bias;       // (channels)
  ParamId projection;      // (embed_dim, flat_width)
  ParamId projection_bias; // (embed_dim)
  ParamId entity_bias;     // (seen entities)
};

/// Raised when an id lies outside ConvE's tables (e.g. an unseen entity).
class LookupError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Order-independent FNV-1a digest of a triple set, recorded in checkpoints.
inline std::string triple_set_hash(std::vector<Triple> triples) {
  std::sort(triples.begin(), triples.end());
  triples.erase(std::unique(triples.begin(), triples.end()), triples.end());
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint32_t v) {
    for (int b = 0; b < 4; ++b) {
      h ^= (v >> (8 * b)) & 0xFFu;
      h *= 1099511628211ULL;
    }
  };
  for (const Triple& t : triples) {
    mix(t.head);
    mix(t.rel);
    mix(t.tail);
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

/// ConvE scorer over the seen entities: reshape and stack [e_s; r] to a
/// (2·rows × cols) image, 3×3 convolution, ReLU, flatten, project, ReLU,
/// then dot with the object embedding plus a per-object bias.
template <class Real>
class ConvE {
 public:
  ConvE(const ConvEConfig& cfg, const std::vector<EntityId>& entities, RelationSpace relations, std::uint64_t seed)
      : cfg_(cfg), relations_(relations), entities_(entities), seed_(seed) {
    cfg_.validate();
    std::sort(entities_.begin(), entities_.end());
    entities_.erase(std::unique(entities_.begin(), entities_.end()), entities_.end());
    for (std::size_t i = 0; i < entities_.size(); ++i) local_.emplace(entities_[i], i);
    Rng init(seed, 0xC0DE);
    const std::size_t d = cfg_.embed_dim, k = cfg_.kernel, n = entities_.size();
    params_.entity_table = store_.add("conve.entity_table", xavier_normal<Real>({n, d}, d, d, init));
    params_.relation_table = store_.add("conve.relation_table", xavier_normal<Real>({2 * relations_.num_base(), d}, d, d, init));
    params_.kernel = store_.add("conve.kernel", xavier_normal<Real>({cfg_.channels, 1, k, k}, k * k, cfg_.channels * k * k, init));
    params_.conv_bias = store_.add("conve.conv_bias", Tensor<Real>({cfg_.channels}));
    params_.projection = store_.add("conve.projection", xavier_matrix<Real>(d, cfg_.flat_width(), init));
    params_.projection_bias = store_.add("conve.projection_bias", Tensor<Real>({d}));
    params_.entity_bias = store_.add("conve.entity_bias", Tensor<Real>({n}));
  }

  const ConvEConfig& config() const noexcept { return cfg_; }
  const ConvEParams& params() const noexcept { return params_; }
  ParamStore<Real>& store() noexcept { return store_; }
  const ParamStore<Real>& store() const noexcept { return store_; }
  const std::vector<EntityId>& entities() const noexcept { return entities_; }
  const RelationSpace& relations() const noexcept { return relations_; }
  std::uint64_t seed() const noexcept { return seed_; }

  bool knows_entity(EntityId e) const { return local_.contains(e); }
  bool knows_relation(RelationId r) const { return relations_.is_fact_relation(r); }

  /// Row of `e` in the entity tables; throws LookupError for unknown ids.
  std::size_t local(EntityId e) const {
    auto it = local_.find(e);
    if (it == local_.end()) throw LookupError("ConvE: entity " + std::to_string(e) + " is not in the ConvE tables");
    return it->second;
  }

  /// Hidden query vector for (e_s, r) after the projection layer.
  Var<Real> query_vector(const ForwardContext<Real>& ctx, EntityId subject, RelationId rel) const {
    if (!knows_relation(rel)) throw LookupError("ConvE: relation " + std::to_string(rel) + " is not in the ConvE tables");
    const std::size_t s = local(subject);
    const bool train = ctx.training;
    Var<Real> es = ops::gather_row(ctx.param(params_.entity_table), s);
    Var<Real> er = ops::gather_row(ctx.param(params_.relation_table), rel);
    Var<Real> image = ops::reshape(ops::concat<Real>({es, er}), Shape{1, 2 * cfg_.rows, cfg_.cols});
    if (train) image = ops::dropout(image, cfg_.input_dropout, ctx.stream(), true);
    Var<Real> features = ops::relu(ops::conv2d(image, ctx.param(params_.kernel), ctx.param(params_.conv_bias)));
    if (train) features = ops::dropout(features, cfg_.feature_dropout, ctx.stream(), true);
    Var<Real> flat = ops::reshape(features, Shape{cfg_.flat_width()});
    Var<Real> hidden = ops::add_bias(ops::linear(flat, ctx.param(params_.projection)), ctx.param(params_.projection_bias));
    if (train) hidden = ops::dropout(hidden, cfg_.hidden_dropout, ctx.stream(), true);
    return ops::relu(hidden);
  }

  /// Logit of (e_s, r, e_o).
  Var<Real> score(const ForwardContext<Real>& ctx, EntityId subject, RelationId rel, EntityId object) const {
    const std::size_t o = local(object);
    const Var<Real> h = query_vector(ctx, subject, rel);
    const Var<Real> eo = ops::gather_row(ctx.param(params_.entity_table), o);
    return ops::add(ops::dot(h, eo), ops::pick(ctx.param(params_.entity_bias), o));
  }

  /// Logits of (e_s, r, ·) over every table entity, in `entities()` order.
  Var<Real> score_all(const ForwardContext<Real>& ctx, EntityId subject, RelationId rel) const {
    return ops::add_bias(ops::linear(query_vector(ctx, subject, rel), ctx.param(params_.entity_table)), ctx.param(params_.entity_bias));
  }

  /// Inference-mode logit as a plain number.
  double score_value(EntityId subject, RelationId rel, EntityId object) const {
    Tape<Real> tape(false);
    const ForwardContext<Real> ctx{tape, store_, false, nullptr};
    return static_cast<double>(score(ctx, subject, rel, object).item());
  }

  /// Inference-mode logits over all table entities.
  std::vector<double> score_all_values(EntityId subject, RelationId rel) const {
    Tape<Real> tape(false);
    const ForwardContext<Real> ctx{tape, store_, false, nullptr};
    const auto v = score_all(ctx, subject, rel).value().data();
    return std::vector<double>(v.begin(), v.end());
  }

  /// Saves the tables plus a manifest naming the entity rows and the training-set digest.
  void save(const std::filesystem::path& path, const std::string& train_hash) const {
    nlohmann::ordered_json extra;
    extra["kind"] = "conve";
    extra["train_subgraph_hash"] = train_hash;
    extra["num_base_relations"] = relations_.num_base();
    extra["config"] = {{"embed_dim", cfg_.embed_dim},         {"rows", cfg_.rows},
                       {"cols", cfg_.cols},                   {"channels", cfg_.channels},
                       {"kernel", cfg_.kernel},               {"input_dropout", cfg_.input_dropout},
                       {"feature_dropout", cfg_.feature_dropout}, {"hidden_dropout", cfg_.hidden_dropout},
                       {"label_smoothing", cfg_.label_smoothing}};
    extra["entities"] = entities_;
    checkpoint::save(store_, path, seed_, extra);
  }

  /// Loads a checkpoint written by save(). When `expected_hash` is given the
  /// recorded training-set digest must match it.
  static ConvE load(const std::filesystem::path& path, const std::optional<std::string>& expected_hash = std::nullopt) {
    const auto m = checkpoint::read_manifest(path);
    if (m.value("kind", "") != "conve") throw checkpoint::FormatError("ConvE: " + path.string() + " is not a ConvE checkpoint");
    if (expected_hash && m.at("train_subgraph_hash").get<std::string>() != *expected_hash) {
      throw checkpoint::FormatError("ConvE: checkpoint was trained on a different training sub-graph (hash " +
                                    m.at("train_subgraph_hash").get<std::string>() + ", expected " + *expected_hash + ")");
    }
    ConvEConfig cfg;
    const auto& c = m.at("config");
    cfg.embed_dim = c.at("embed_dim");
    cfg.rows = c.at("rows");
    cfg.cols = c.at("cols");
    cfg.channels = c.at("channels");
    cfg.kernel = c.at("kernel");
    cfg.input_dropout = c.at("input_dropout");
    cfg.feature_dropout = c.at("feature_dropout");
    cfg.hidden_dropout = c.at("hidden_dropout");
    cfg.label_smoothing = c.at("label_smoothing");
    ConvE model(cfg, m.at("entities").get<std::vector<EntityId>>(), RelationSpace(m.at("num_base_relations").get<std::size_t>()),
                m.at("seed").get<std::uint64_t>());
    checkpoint::load_into(model.store_, path);
    return model;
  }

 private:
  ConvEConfig cfg_;
  RelationSpace relations_;
  std::vector<EntityId> entities_;
  std::unordered_map<EntityId, std::size_t> local_;
  std::uint64_t seed_;
  ParamStore<Real> store_;
  ConvEParams params_;
};

/// 1 on a hit; sigmoid of the ConvE logit on a miss; 0 when any id is outside ConvE's tables.
template <class Real>
double shaped_reward(const ConvE<Real>& model, EntityId source, RelationId query_rel, EntityId final_entity, EntityId answer) {
  if (final_entity == answer) return 1.0;
  if (!model.knows_entity(source) || !model.knows_entity(final_entity) || !model.knows_relation(query_rel)) return 0.0;
  const double logit = model.score_value(source, query_rel, final_entity);
  return logit >= 0 ? 1.0 / (1.0 + std::exp(-logit)) : std::exp(logit) / (1.0 + std::exp(logit));
}

/// Miss-reward hook for the environment; the hit case is handled by terminal_reward.
template <class Real>
RewardShaper make_shaper(const ConvE<Real>& model) {
  return [&model](EntityId source, RelationId query_rel, EntityId final_entity) {
    if (!model.knows_entity(source) || !model.knows_entity(final_entity) || !model.knows_relation(query_rel)) return 0.0;
    const double logit = model.score_value(source, query_rel, final_entity);
    return logit >= 0 ? 1.0 / (1.0 + std::exp(-logit)) : std::exp(logit) / (1.0 + std::exp(logit));
  };
}

struct ConvETrainOptions {
  std::size_t epochs = 20;
  std::size_t batch_size = 128;
  double learning_rate = 0.003;
  std::uint64_t seed = 0;
};

struct ConvEEpoch {
  std::size_t epoch = 0;
  double loss = 0.0;
  double dev_mrr = std::numeric_limits<double>::quiet_NaN();
  double dev_hits1 = std::numeric_limits<double>::quiet_NaN();
};

struct ConvETrainResult {
  std::vector<ConvEEpoch> history;
  std::size_t best_epoch = 0;
  std::string train_hash;
};

/// Filtered MRR and Hits@1 of ConvE on (s, r, o) queries and their inverses;
/// `known` holds every (s, r) → tails fact used for filtering.
template <class Real>
std::pair<double, double> conve_rank_metrics(const ConvE<Real>& model, const std::vector<Triple>& queries,
                                             const std::map<std::pair<EntityId, RelationId>, std::unordered_set<EntityId>>& known) {
  double rr = 0.0, hits = 0.0;
  std::size_t count = 0;
  const RelationSpace& rs = model.relations();
  for (const Triple& t : queries) {
    for (const Triple& q : {t, Triple{t.tail, rs.inverse(t.rel), t.head}}) {
      if (!model.knows_entity(q.head) || !model.knows_entity(q.tail)) continue;
      const auto scores = model.score_all_values(q.head, q.rel);
      const std::size_t target = model.local(q.tail);
      const auto kit = known.find({q.head, q.rel});
      std::size_t rank = 1;
      for (std::size_t i = 0; i < scores.size(); ++i) {
        if (i == target) continue;
        const bool filtered = kit != known.end() && kit->second.contains(model.entities()[i]);
        if (filtered) continue;
        if (scores[i] > scores[target] || (scores[i] == scores[target] && i < target)) ++rank;
      }
      rr += 1.0 / static_cast<double>(rank);
      hits += rank == 1 ? 1.0 : 0.0;
      ++count;
    }
  }
  if (count == 0) return {0.0, 0.0};
  return {rr / static_cast<double>(count), hits / static_cast<double>(count)};
}

/// 1-vs-all training with label smoothing on `train` (and its inverses).
/// `dev` is used only to select the best epoch; the model is left holding the
/// best-dev parameters (the last epoch when dev is empty).
template <class Real>
ConvETrainResult train_conve(ConvE<Real>& model, const std::vector<Triple>& train, const std::vector<Triple>& dev,
                             const ConvETrainOptions& opt, const std::function<void(const ConvEEpoch&)>& on_epoch = {}) {
  const RelationSpace& rs = model.relations();
  std::map<std::pair<EntityId, RelationId>, std::unordered_set<EntityId>> groups;
  for (const Triple& t : train) {
    if (!model.knows_entity(t.head) || !model.knows_entity(t.tail)) {
      throw LookupError("train_conve: training triple touches an entity outside the ConvE tables");
    }
    groups[{t.head, t.rel}].insert(t.tail);
    groups[{t.tail, rs.inverse(t.rel)}].insert(t.head);
  }
  std::vector<std::pair<EntityId, RelationId>> keys;
  for (const auto& [k, v] : groups) keys.push_back(k);

  auto known = groups;
  for (const Triple& t : dev) {
    known[{t.head, t.rel}].insert(t.tail);
    known[{t.tail, rs.inverse(t.rel)}].insert(t.head);
  }

  ConvETrainResult result;
  result.train_hash = triple_set_hash(train);
  const std::size_t n = model.entities().size();
  const double eps = model.config().label_smoothing;
  const AdamConfig adam{opt.learning_rate};
  Rng order_rng(opt.seed, 0xC0DE0);
  Rng dropout_rng(opt.seed, 0xC0DE1);
  std::optional<std::vector<Tensor<Real>>> best;
  double best_mrr = -1.0;

  for (std::size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
    std::shuffle(keys.begin(), keys.end(), order_rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < keys.size(); b += opt.batch_size) {
      const std::size_t e = std::min(keys.size(), b + opt.batch_size);
      Tape<Real> tape;
      const ForwardContext<Real> ctx{tape, model.store(), true, &dropout_rng};
      std::vector<Var<Real>> rows;
      Tensor<Real> targets({e - b, n});
      for (std::size_t i = b; i < e; ++i) {
        rows.push_back(model.query_vector(ctx, keys[i].first, keys[i].second));
        for (std::size_t j = 0; j < n; ++j) targets.at(i - b, j) = static_cast<Real>(eps / static_cast<double>(n));
        for (EntityId tail : groups[keys[i]]) targets.at(i - b, model.local(tail)) += static_cast<Real>(1.0 - eps);
      }
      const Var<Real> logits = ops::add_bias(ops::linear(ops::stack_rows(rows), ctx.param(model.params().entity_table)),
                                             ctx.param(model.params().entity_bias));
      const Var<Real> loss = ops::bce_with_logits(logits, targets);
      model.store().zero_grad();
      tape.backward(loss);
      tape.accumulate_into(model.store());
      adam_step(model.store(), adam);
      loss_sum += static_cast<double>(loss.item());
      ++batches;
    }
    ConvEEpoch rec;
    rec.epoch = epoch;
    rec.loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
    if (!dev.empty()) std::tie(rec.dev_mrr, rec.dev_hits1) = conve_rank_metrics(model, dev, known);
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    const double selector = dev.empty() ? static_cast<double>(epoch) : rec.dev_mrr;
    if (selector > best_mrr) {
      best_mrr = selector;
      result.best_epoch = epoch;
      best.emplace();
      for (const auto& entry : model.store().entries()) best->push_back(entry.value);
    }
  }
  if (best) {
    std::size_t i = 0;
    for (auto& entry : model.store().entries()) entry.value = (*best)[i++];
  }
  return result;
}

}  // namespace elink
