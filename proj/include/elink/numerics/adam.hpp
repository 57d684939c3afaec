#pragma once

#include <cmath>

#include "elink/numerics/params.hpp"

namespace elink {

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected Adam update of every parameter from its grad buffer.
template <class Real>
void adam_step(ParamStore<Real>& store, const AdamConfig& cfg = {}) {
  const std::size_t step = ++store.adam_steps;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  const Real b1 = static_cast<Real>(cfg.beta1), b2 = static_cast<Real>(cfg.beta2);
  for (auto& e : store.entries()) {
    auto w = e.value.data();
    const auto g = e.grad.data();
    auto m = e.first_moment.data();
    auto v = e.second_moment.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (Real{1} - b1) * g[i];
      v[i] = b2 * v[i] + (Real{1} - b2) * g[i] * g[i];
      const double m_hat = static_cast<double>(m[i]) / c1;
      const double v_hat = static_cast<double>(v[i]) / c2;
      w[i] -= static_cast<Real>(cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon));
    }
  }
}

}  // namespace elink
