#pragma once

// Umbrella header: inductive link prediction with a Graph Transformer encoder
// and a path-finding policy.

#include "elink/log.hpp"
#include "elink/numerics/adam.hpp"
#include "elink/numerics/checkpoint.hpp"
#include "elink/numerics/context.hpp"
#include "elink/numerics/ops.hpp"
#include "elink/numerics/params.hpp"
#include "elink/numerics/rng.hpp"
#include "elink/numerics/tape.hpp"
#include "elink/numerics/tensor.hpp"
#include "elink/kg/answer_index.hpp"
#include "elink/kg/graph.hpp"
#include "elink/kg/graph_view.hpp"
#include "elink/kg/pagerank.hpp"
#include "elink/kg/split.hpp"
#include "elink/kg/split_io.hpp"
#include "elink/kg/triple_io.hpp"
#include "elink/kg/types.hpp"
#include "elink/encoder/graph_transformer.hpp"
#include "elink/env/environment.hpp"
#include "elink/policy/policy_network.hpp"
#include "elink/policy/rollout.hpp"
#include "elink/reward/conve.hpp"
#include "elink/harness/beam_search.hpp"
#include "elink/harness/config.hpp"
#include "elink/harness/evaluate.hpp"
#include "elink/harness/explain.hpp"
#include "elink/harness/metrics.hpp"
#include "elink/harness/model.hpp"
#include "elink/harness/relation_types.hpp"
#include "elink/harness/synthetic.hpp"
#include "elink/harness/trainer.hpp"
