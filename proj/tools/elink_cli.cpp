// elink: split / pretrain-conve / train / eval / explain.
//
// Exit codes: 0 success, 1 configuration error, 2 data error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "elink/elink.hpp"

namespace fs = std::filesystem;
using namespace elink;
using Real = double;

namespace {

/// Problems with the input data rather than the configuration.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> data_dir;
  std::optional<std::string> checkpoint;
};

ExperimentConfig resolve(const Overrides& o) {
  ExperimentConfig cfg = load_config(o.config);
  if (o.seed) set_seed(cfg, *o.seed);
  if (o.data_dir) cfg.data_dir = *o.data_dir;
  if (o.checkpoint) cfg.checkpoint = *o.checkpoint;
  if (cfg.data_dir.empty()) throw ConfigError("data_dir is not set (config key or --data-dir)");
  return cfg;
}

fs::path conve_path(const ExperimentConfig& cfg) { return cfg.conve_checkpoint.empty() ? cfg.data_dir / "conve.ckpt" : cfg.conve_checkpoint; }
fs::path model_path(const ExperimentConfig& cfg) { return cfg.checkpoint.empty() ? cfg.data_dir / "model.ckpt" : cfg.checkpoint; }

LoadedSplit load_split(const ExperimentConfig& cfg) {
  try {
    return read_split(cfg.data_dir);
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }
}

int cmd_split(const ExperimentConfig& cfg) {
  const fs::path raw = cfg.raw_triples.empty() ? cfg.data_dir / "triples.txt" : cfg.raw_triples;
  Vocabulary vocab;
  std::vector<Triple> triples;
  try {
    triples = load_triples(raw, vocab);
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }
  if (triples.empty()) throw DataError("no triples in " + raw.string());
  InductiveSplit split;
  try {
    split = make_inductive_split(triples, vocab.num_entities(), cfg.split);
  } catch (const SplitError& e) {
    throw DataError(e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  write_split(cfg.data_dir, split, vocab);
  std::cout << "entities " << split.num_entities << " (unseen " << split.unseen.size() << "), train " << split.train.size() << ", dev "
            << split.dev.size() << ", test " << split.test.size() << ", aux " << split.aux.size() << ", dropped test " << split.dropped_test
            << "\n";
  return 0;
}

int cmd_pretrain_conve(const ExperimentConfig& cfg, const std::optional<std::string>& out_override) {
  const LoadedSplit data = load_split(cfg);
  ConvE<Real> conve(cfg.conve, data.split.seen, data.vocab.relation_space(), cfg.conve_train.seed);
  const auto result = train_conve(conve, data.split.train, data.split.dev, cfg.conve_train, [](const ConvEEpoch& e) {
    std::cout << "conve epoch " << e.epoch << " loss " << e.loss << " dev_mrr " << e.dev_mrr << " dev_hits1 " << e.dev_hits1 << "\n";
  });
  const fs::path out = out_override ? fs::path(*out_override) : conve_path(cfg);
  conve.save(out, result.train_hash);
  std::cout << "best epoch " << result.best_epoch << ", saved " << out.string() << "\n";
  return 0;
}

int cmd_train(const ExperimentConfig& cfg) {
  const LoadedSplit data = load_split(cfg);
  std::optional<ConvE<Real>> conve;
  if (cfg.train.use_reward_shaping) {
    const fs::path p = conve_path(cfg);
    if (!fs::exists(p)) throw ConfigError("use_reward_shaping is on but the ConvE checkpoint " + p.string() + " does not exist");
    conve.emplace(ConvE<Real>::load(p, triple_set_hash(data.split.train)));
  }
  Model<Real> model(cfg.encoder, cfg.policy, data.split.num_entities, data.vocab.relation_space(), cfg.train.seed);
  const auto result = train_agent(model, data.split, cfg, conve ? &*conve : nullptr, [](const TrainEpoch& e) {
    std::cout << "epoch " << e.epoch << " loss " << e.loss << " reward " << e.mean_reward << " hit_rate " << e.hit_rate << " dev_mrr " << e.dev_mrr
              << " dev_hits1 " << e.dev_hits1 << "\n";
  });
  nlohmann::ordered_json extra;
  extra["best_epoch"] = result.best_epoch;
  extra["best_dev_mrr"] = std::isnan(result.best_dev_mrr) ? nlohmann::ordered_json() : nlohmann::ordered_json(result.best_dev_mrr);
  extra["reward_shaping"] = cfg.train.use_reward_shaping;
  extra["train_subgraph_hash"] = triple_set_hash(data.split.train);
  model.save(model_path(cfg), extra);
  std::cout << "best epoch " << result.best_epoch << ", saved " << model_path(cfg).string() << "\n";
  return 0;
}

struct EvalSetup {
  LoadedSplit data;
  Model<Real> model;
  InductiveEvalData eval;
  UnseenEmbeddings<Real> unseen;
  EvalOptions opt;
};

EvalSetup prepare_eval(const ExperimentConfig& cfg) {
  LoadedSplit data = load_split(cfg);
  const fs::path path = model_path(cfg);
  if (!fs::exists(path)) throw ConfigError("model checkpoint " + path.string() + " does not exist");
  Model<Real> model = Model<Real>::load(path);
  if (model.num_entities() != data.split.num_entities || model.relations() != data.vocab.relation_space()) {
    throw DataError("model checkpoint does not match the split in " + cfg.data_dir.string());
  }
  const RelationSpace rs = data.vocab.relation_space();
  InductiveEvalData eval = cfg.eval_set == "dev" ? make_dev_data(data.split, rs, cfg.env.top_k, 0)
                                                 : make_test_data(data.split, rs, cfg.env.top_k, cfg.train.evaluate_inverse);
  UnseenEmbeddings<Real> unseen(data.split.seen_mask(), model.encoder().config().dim, cfg.train.seed);
  EvalOptions opt;
  opt.env = cfg.env;
  opt.beam_width = cfg.train.beam_width;
  opt.threads = cfg.train.threads;
  opt.hide_query_edge = cfg.train.hide_test_edge;
  return EvalSetup{std::move(data), std::move(model), std::move(eval), std::move(unseen), opt};
}

int cmd_eval(const ExperimentConfig& cfg) {
  const EvalSetup s = prepare_eval(cfg);
  const auto results = run_queries(s.model, s.eval.graph, &s.unseen, s.eval.queries, s.eval.known, s.opt);
  const RelationCardinality card(s.data.split.train, s.data.vocab.relation_space());
  const std::string json = make_report(results, card).to_json().dump(2);
  if (cfg.report.empty()) {
    std::cout << json << "\n";
  } else {
    std::ofstream os(cfg.report);
    if (!os) throw DataError("cannot write report " + cfg.report.string());
    os << json << "\n";
  }
  return 0;
}

int cmd_explain(const ExperimentConfig& cfg) {
  EvalSetup s = prepare_eval(cfg);
  const Vocabulary& vocab = s.data.vocab;
  const RelationSpace rs = vocab.relation_space();
  std::vector<Triple> queries = s.eval.queries;
  if (!cfg.explain_head.empty() || !cfg.explain_relation.empty()) {
    const auto h = vocab.find_entity(cfg.explain_head);
    const auto r = vocab.find_relation(cfg.explain_relation);
    if (!h || !r) throw DataError("explain: unknown entity '" + cfg.explain_head + "' or relation '" + cfg.explain_relation + "'");
    queries.clear();
    bool found = false;
    for (const Triple& t : s.eval.queries) {
      if (t.head == *h && t.rel == *r) {
        queries.push_back(t);
        found = true;
      }
    }
    // Free-form query: nothing to hide, the answer is unknown.
    if (!found) {
      queries.push_back({*h, *r, *h});
      s.opt.hide_query_edge = false;
    }
  }
  const auto results = run_queries(s.model, s.eval.graph, &s.unseen, queries, s.eval.known, s.opt);
  for (const auto& r : results) {
    const std::string prefix = vocab.entity_label(r.query.head) + "\t" + vocab.relation_label(r.query.rel) + "\t";
    std::istringstream lines(render_explanations(r.predictions, cfg.explain_top, rs, vocab));
    for (std::string line; std::getline(lines, line);) std::cout << prefix << line << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Inductive link prediction with explainable reasoning paths"};
  app.require_subcommand(1);
  Overrides o;
  auto add_common = [&o](CLI::App* sub) {
    sub->add_option("config", o.config, "key = value configuration file")->required();
    sub->add_option("--seed", o.seed, "override the seed");
    sub->add_option("--data-dir", o.data_dir, "override the data directory");
    sub->add_option("--checkpoint", o.checkpoint, "override the checkpoint path");
  };
  CLI::App* split = app.add_subcommand("split", "raw triples -> inductive split");
  CLI::App* conve = app.add_subcommand("pretrain-conve", "train the reward-shaping scorer on the training sub-graph");
  CLI::App* train = app.add_subcommand("train", "train encoder and policy");
  CLI::App* eval = app.add_subcommand("eval", "filtered MRR / Hits@k report as JSON");
  CLI::App* explain = app.add_subcommand("explain", "print reasoning paths, one per line");
  for (CLI::App* sub : {split, conve, train, eval, explain}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const ExperimentConfig cfg = resolve(o);
    if (*split) return cmd_split(cfg);
    if (*conve) return cmd_pretrain_conve(cfg, o.checkpoint);
    if (*train) return cmd_train(cfg);
    if (*eval) return cmd_eval(cfg);
    if (*explain) return cmd_explain(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
