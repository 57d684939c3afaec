#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace elink {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

/// Layout of relation ids: base relations [0, R), inverses [R, 2R), then
/// START, SELF_LOOP and PAD. Reserved ids never occur in stored facts.
class RelationSpace {
 public:
  constexpr RelationSpace() = default;
  constexpr explicit RelationSpace(std::size_t num_base) : base_(static_cast<RelationId>(num_base)) {}

  constexpr std::size_t num_base() const noexcept { return base_; }
  /// Base + inverse + 3 reserved.
  constexpr std::size_t total() const noexcept { return 2 * std::size_t{base_} + 3; }

  constexpr RelationId inverse(RelationId r) const {
    if (r >= 2 * base_) throw std::out_of_range("RelationSpace::inverse: reserved relation " + std::to_string(r));
    return r < base_ ? r + base_ : r - base_;
  }
  constexpr bool is_inverse(RelationId r) const noexcept { return r >= base_ && r < 2 * base_; }
  constexpr bool is_reserved(RelationId r) const noexcept { return r >= 2 * base_; }
  constexpr bool is_fact_relation(RelationId r) const noexcept { return r < 2 * base_; }
  /// The base relation that r or its inverse refers to.
  constexpr RelationId base_of(RelationId r) const noexcept { return r < base_ ? r : r - base_; }

  constexpr RelationId start() const noexcept { return 2 * base_; }
  constexpr RelationId self_loop() const noexcept { return 2 * base_ + 1; }
  constexpr RelationId pad() const noexcept { return 2 * base_ + 2; }

  friend constexpr bool operator==(RelationSpace, RelationSpace) = default;

 private:
  RelationId base_ = 0;
};

struct Triple {
  EntityId head = 0;
  RelationId rel = 0;
  EntityId tail = 0;

  friend constexpr auto operator<=>(const Triple&, const Triple&) = default;
};

/// Outgoing edge (relation, destination) of an adjacency list.
struct Edge {
  RelationId rel = 0;
  EntityId dest = 0;

  friend constexpr auto operator<=>(const Edge&, const Edge&) = default;
};

struct TripleHash {
  std::size_t operator()(const Triple& t) const noexcept {
    std::uint64_t h = (static_cast<std::uint64_t>(t.head) << 32) ^ t.tail;
    h ^= static_cast<std::uint64_t>(t.rel) * 0x9E3779B97F4A7C15ULL;
    return std::hash<std::uint64_t>{}(h);
  }
};

}  // namespace elink
