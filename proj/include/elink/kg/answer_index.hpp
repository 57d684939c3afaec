#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <unordered_set>

#include "elink/kg/types.hpp"

namespace elink {

/// All known tails of each (head, relation) pair.
class AnswerIndex {
 public:
  AnswerIndex() = default;
  AnswerIndex(std::span<const Triple> triples, const RelationSpace& relations, bool with_inverses) {
    add(triples, relations, with_inverses);
  }

  void add(std::span<const Triple> triples, const RelationSpace& relations, bool with_inverses) {
    for (const Triple& t : triples) {
      index_[key(t.head, t.rel)].insert(t.tail);
      if (with_inverses) index_[key(t.tail, relations.inverse(t.rel))].insert(t.head);
    }
  }

  const std::unordered_set<EntityId>& answers(EntityId head, RelationId rel) const {
    static const std::unordered_set<EntityId> none;
    auto it = index_.find(key(head, rel));
    return it == index_.end() ? none : it->second;
  }

 private:
  static std::uint64_t key(EntityId h, RelationId r) { return (static_cast<std::uint64_t>(h) << 32) | r; }
  std::unordered_map<std::uint64_t, std::unordered_set<EntityId>> index_;
};

}  // namespace elink
