#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "elink/encoder/graph_transformer.hpp"
#include "elink/numerics/checkpoint.hpp"
#include "elink/policy/policy_network.hpp"

namespace elink {

/// Encoder + policy sharing one parameter store.
template <class Real>
class Model {
 public:
  Model(const EncoderConfig& encoder_cfg, const PolicyConfig& policy_cfg, std::size_t num_entities, RelationSpace relations,
        std::uint64_t seed)
      : store_(std::make_unique<ParamStore<Real>>()), num_entities_(num_entities), relations_(relations), seed_(seed) {
    Rng init(seed, 0x1417);
    Rng encoder_init = init.fork(1), policy_init = init.fork(2);
    encoder_ = GraphTransformer<Real>(encoder_cfg, *store_, num_entities, relations, encoder_init);
    policy_ = PolicyNetwork<Real>(policy_cfg, encoder_cfg.dim, *store_, policy_init);
  }

  ParamStore<Real>& store() noexcept { return *store_; }
  const ParamStore<Real>& store() const noexcept { return *store_; }
  const GraphTransformer<Real>& encoder() const noexcept { return encoder_; }
  const PolicyNetwork<Real>& policy() const noexcept { return policy_; }
  std::size_t num_entities() const noexcept { return num_entities_; }
  const RelationSpace& relations() const noexcept { return relations_; }
  std::uint64_t seed() const noexcept { return seed_; }

  void save(const std::filesystem::path& path, const nlohmann::ordered_json& extra = nlohmann::ordered_json::object()) const {
    const auto& e = encoder_.config();
    const auto& p = policy_.config();
    nlohmann::ordered_json m;
    m["kind"] = "model";
    m["num_entities"] = num_entities_;
    m["num_base_relations"] = relations_.num_base();
    m["encoder"] = {{"dim", e.dim},           {"heads", e.heads},     {"layers", e.layers},
                    {"ffn_hidden", e.ffn_hidden}, {"leaky_slope", e.leaky_slope}, {"dropout", e.dropout},
                    {"mask_fraction", e.mask_fraction}, {"layer_norm_eps", e.layer_norm_eps}};
    m["policy"] = {{"lstm_layers", p.lstm_layers}, {"lstm_hidden", p.lstm_hidden}, {"mlp_hidden", p.mlp_hidden},
                   {"rollouts", p.rollouts},       {"entropy_weight", p.entropy_weight}, {"use_baseline", p.use_baseline},
                   {"baseline", p.baseline},       {"grad_clip", p.grad_clip}};
    for (const auto& [k, v] : extra.items()) m[k] = v;
    checkpoint::save(*store_, path, seed_, m);
  }

  static Model load(const std::filesystem::path& path) {
    const auto m = checkpoint::read_manifest(path);
    if (m.value("kind", "") != "model") throw checkpoint::FormatError(path.string() + " is not a model checkpoint");
    EncoderConfig e;
    const auto& je = m.at("encoder");
    e.dim = je.at("dim");
    e.heads = je.at("heads");
    e.layers = je.at("layers");
    e.ffn_hidden = je.at("ffn_hidden");
    e.leaky_slope = je.at("leaky_slope");
    e.dropout = je.at("dropout");
    e.mask_fraction = je.at("mask_fraction");
    e.layer_norm_eps = je.at("layer_norm_eps");
    PolicyConfig p;
    const auto& jp = m.at("policy");
    p.lstm_layers = jp.at("lstm_layers");
    p.lstm_hidden = jp.at("lstm_hidden");
    p.mlp_hidden = jp.at("mlp_hidden");
    p.rollouts = jp.at("rollouts");
    p.entropy_weight = jp.at("entropy_weight");
    p.use_baseline = jp.at("use_baseline");
    p.baseline = jp.at("baseline");
    p.grad_clip = jp.at("grad_clip");
    Model model(e, p, m.at("num_entities").get<std::size_t>(), RelationSpace(m.at("num_base_relations").get<std::size_t>()),
                m.at("seed").get<std::uint64_t>());
    checkpoint::load_into(model.store(), path);
    return model;
  }

 private:
  std::unique_ptr<ParamStore<Real>> store_;
  GraphTransformer<Real> encoder_;
  PolicyNetwork<Real> policy_;
  std::size_t num_entities_;
  RelationSpace relations_;
  std::uint64_t seed_;
};

}  // namespace elink
