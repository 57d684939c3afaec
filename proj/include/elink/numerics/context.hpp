#pragma once

#include "elink/numerics/params.hpp"
#include "elink/numerics/rng.hpp"
#include "elink/numerics/tape.hpp"

namespace elink {

/// Everything a forward pass needs: where to record, which parameters to
/// read, and whether stochastic layers are active.
template <class Real>
struct ForwardContext {
  Tape<Real>& tape;
  const ParamStore<Real>& params;
  bool training = false;
  Rng* rng = nullptr;

  Var<Real> param(ParamId id) const { return tape.param(params, id); }
  Var<Real> constant(Tensor<Real> t) const { return tape.constant(std::move(t)); }

  Rng& stream() const {
    if (rng == nullptr) throw std::logic_error("ForwardContext: training pass without an rng stream");
    return *rng;
  }
};

}  // namespace elink
