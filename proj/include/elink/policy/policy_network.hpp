#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "elink/numerics/context.hpp"
#include "elink/numerics/ops.hpp"
#include "elink/numerics/params.hpp"

namespace elink {

struct PolicyConfig {
  std::size_t lstm_layers = 2;
  /// Zero selects 2 * dim.
  std::size_t lstm_hidden = 0;
  /// Width of the ReLU layer between W_1 and W_2; zero selects 2 * dim.
  std::size_t mlp_hidden = 0;
  /// Rollouts per training query (N).
  std::size_t rollouts = 4;
  /// Entropy regularization weight β, within [0, 0.1].
  double entropy_weight = 0.02;
  /// Constant reward baseline; off unless enabled.
  bool use_baseline = false;
  double baseline = 0.0;
  /// Global gradient-norm clip; zero disables.
  double grad_clip = 5.0;

  std::size_t lstm_width(std::size_t dim) const { return lstm_hidden ? lstm_hidden : 2 * dim; }
  std::size_t mlp_width(std::size_t dim) const { return mlp_hidden ? mlp_hidden : 2 * dim; }

  void validate() const {
    if (lstm_layers < 1) throw std::invalid_argument("PolicyConfig: lstm_layers must be >= 1");
    if (rollouts < 1) throw std::invalid_argument("PolicyConfig: rollouts must be >= 1");
    if (!(entropy_weight >= 0.0 && entropy_weight <= 0.1)) throw std::invalid_argument("PolicyConfig: entropy_weight must lie in [0, 0.1]");
  }
};

struct PolicyParams {
  struct LstmLayer {
    ParamId input_weights, hidden_weights, bias;
  };
  std::vector<LstmLayer> lstm;
  ParamId w1;  // (mlp, lstm_hidden + 2d)
  ParamId w2;  // (2d, mlp)
};

/// Path-history LSTM and the action scorer
///   π(a | s) = softmax(A (W_2 ReLU(W_1 [h; e_t; r_q]))).
template <class Real>
class PolicyNetwork {
 public:
  using History = std::vector<ops::LstmState<Real>>;

  PolicyNetwork() = default;

  /// Registers parameters under "policy." in `store`.
  PolicyNetwork(const PolicyConfig& cfg, std::size_t dim, ParamStore<Real>& store, Rng& init) : cfg_(cfg), dim_(dim) {
    cfg_.validate();
    const std::size_t hidden = cfg_.lstm_width(dim), mlp = cfg_.mlp_width(dim);
    for (std::size_t l = 0; l < cfg_.lstm_layers; ++l) {
      const std::size_t in = l == 0 ? 2 * dim : hidden;
      const std::string p = "policy.lstm" + std::to_string(l) + ".";
      PolicyParams::LstmLayer layer;
      layer.input_weights = store.add(p + "input_weights", xavier_matrix<Real>(4 * hidden, in, init));
      layer.hidden_weights = store.add(p + "hidden_weights", xavier_matrix<Real>(4 * hidden, hidden, init));
      layer.bias = store.add(p + "bias", Tensor<Real>({4 * hidden}));
      params_.lstm.push_back(layer);
    }
    params_.w1 = store.add("policy.w1", xavier_matrix<Real>(mlp, hidden + 2 * dim, init));
    params_.w2 = store.add("policy.w2", xavier_matrix<Real>(2 * dim, mlp, init));
  }

  const PolicyConfig& config() const noexcept { return cfg_; }
  const PolicyParams& params() const noexcept { return params_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t hidden_width() const { return cfg_.lstm_width(dim_); }

  /// h_0: the stacked LSTM from zero state after consuming [e_s; r_START].
  History init_history(const ForwardContext<Real>& ctx, const Var<Real>& source, const Var<Real>& start_relation) const {
    History zero;
    for (std::size_t l = 0; l < cfg_.lstm_layers; ++l) {
      zero.push_back({ctx.constant(Tensor<Real>({hidden_width()})), ctx.constant(Tensor<Real>({hidden_width()}))});
    }
    return encode_history(ctx, zero, ops::concat<Real>({source, start_relation}));
  }

  /// One stacked-LSTM step on the embedding [e; r] of the action just taken.
  History encode_history(const ForwardContext<Real>& ctx, const History& previous, const Var<Real>& action) const {
    if (action.value().rank() != 1 || action.size() != 2 * dim_) throw_dimension_error("encode_history", action.shape(), Shape{2 * dim_});
    if (previous.size() != cfg_.lstm_layers) throw std::invalid_argument("encode_history: history depth mismatch");
    History next;
    Var<Real> input = action;
    for (std::size_t l = 0; l < cfg_.lstm_layers; ++l) {
      const auto& lp = params_.lstm[l];
      next.push_back(ops::lstm_cell(input, previous[l], ctx.param(lp.input_weights), ctx.param(lp.hidden_weights), ctx.param(lp.bias)));
      input = next.back().hidden;
    }
    return next;
  }

  /// Unnormalized action scores A (W_2 ReLU(W_1 [h; e_t; r_q])) for action rows A of shape (n, 2d).
  Var<Real> logits(const ForwardContext<Real>& ctx, const History& history, const Var<Real>& current, const Var<Real>& query_rel,
                   const Var<Real>& actions) const {
    if (actions.value().rank() != 2 || actions.value().dim(1) != 2 * dim_ || actions.value().dim(0) == 0) {
      throw_dimension_error("action_distribution", actions.shape(), Shape{0, 2 * dim_});
    }
    const Var<Real> state = ops::concat<Real>({history.back().hidden, current, query_rel});
    const Var<Real> hidden = ops::relu(ops::linear(state, ctx.param(params_.w1)));
    const Var<Real> projected = ops::linear(hidden, ctx.param(params_.w2));
    return ops::matmul(actions, projected);
  }

  /// Probabilities over action rows; rows with mask == false (padding) get probability 0.
  Var<Real> action_distribution(const ForwardContext<Real>& ctx, const History& history, const Var<Real>& current,
                                const Var<Real>& query_rel, const Var<Real>& actions, const std::vector<bool>& mask = {}) const {
    const Var<Real> scores = logits(ctx, history, current, query_rel, actions);
    const std::vector<bool> live = mask.empty() ? std::vector<bool>(scores.size(), true) : mask;
    return ops::masked_softmax(scores, live);
  }

  /// log π over all action rows.
  Var<Real> log_probs(const ForwardContext<Real>& ctx, const History& history, const Var<Real>& current, const Var<Real>& query_rel,
                      const Var<Real>& actions) const {
    return ops::log_softmax(logits(ctx, history, current, query_rel, actions));
  }

 private:
  PolicyConfig cfg_;
  std::size_t dim_ = 0;
  PolicyParams params_;
};

}  // namespace elink
