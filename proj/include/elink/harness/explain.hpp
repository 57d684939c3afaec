#pragma once

#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "elink/harness/beam_search.hpp"
#include "elink/kg/triple_io.hpp"

namespace elink {

using EntityNamer = std::function<std::string(EntityId)>;
using RelationNamer = std::function<std::string(RelationId)>;

/// Renders a reasoning path: forward hops as "a —r→ b", inverse hops as
/// "b ←r— a" labeled with the base relation; self-loops are elided.
inline std::string render_path(EntityId source, const std::vector<Action>& path, const RelationSpace& relations,
                               const EntityNamer& entity_name, const RelationNamer& relation_name) {
  std::string out = entity_name(source);
  for (const Action& a : path) {
    if (a.rel == relations.self_loop()) continue;
    if (relations.is_inverse(a.rel)) {
      out += " ←" + relation_name(relations.base_of(a.rel)) + "— ";
    } else {
      out += " —" + relation_name(a.rel) + "→ ";
    }
    out += entity_name(a.dest);
  }
  return out;
}

inline std::string render_path(const RankedPrediction& p, const RelationSpace& relations, const Vocabulary& vocab) {
  return render_path(
      p.source, p.path, relations, [&](EntityId e) { return vocab.entity_label(e); },
      [&](RelationId r) { return vocab.relation_label(r); });
}

/// One line per prediction: rank, entity, log-likelihood, rendered path.
inline std::string render_explanations(const std::vector<RankedPrediction>& ranked, std::size_t top, const RelationSpace& relations,
                                       const Vocabulary& vocab) {
  std::ostringstream os;
  for (std::size_t i = 0; i < ranked.size() && i < top; ++i) {
    const auto& p = ranked[i];
    os << p.rank << '\t' << vocab.entity_label(p.entity) << '\t' << p.log_likelihood << '\t' << render_path(p, relations, vocab) << '\n';
  }
  return os.str();
}

}  // namespace elink
