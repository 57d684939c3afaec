#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "elink/kg/types.hpp"
#include "elink/log.hpp"
#include "elink/numerics/rng.hpp"

namespace elink {

class SplitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SplitConfig {
  double unseen_fraction = 0.10;
  double dev_fraction = 0.05;
  std::uint64_t seed = 0;
  int max_attempts = 8;
};

/// Seen/unseen entity partition with its triple sets:
///   train, dev : both endpoints seen
///   test       : head unseen, tail seen
///   aux        : exactly one endpoint unseen (test triples included)
struct InductiveSplit {
  std::size_t num_entities = 0;
  std::vector<EntityId> seen;
  std::vector<EntityId> unseen;
  std::vector<Triple> train, dev, test, aux;
  /// Test candidates dropped because their head had no other seen neighbor.
  std::size_t dropped_test = 0;
  std::uint64_t seed = 0;
  double unseen_fraction = 0.0;
  double dev_fraction = 0.0;

  std::vector<bool> seen_mask() const {
    std::vector<bool> mask(num_entities, false);
    for (EntityId e : seen) mask[e] = true;
    return mask;
  }
};

namespace detail {

inline std::vector<Triple> drop_orphan_test_triples(std::vector<Triple> candidates, const std::vector<Triple>& aux,
                                                    const std::vector<bool>& is_unseen, std::size_t& dropped) {
  // A test triple stays only if its head keeps a seen neighbor once that
  // triple is hidden, i.e. the head has at least two aux links to seen entities.
  std::map<EntityId, std::size_t> seen_links;
  for (const Triple& t : aux) {
    if (is_unseen[t.head] && !is_unseen[t.tail]) ++seen_links[t.head];
    if (is_unseen[t.tail] && !is_unseen[t.head]) ++seen_links[t.tail];
  }
  std::vector<Triple> kept;
  std::map<EntityId, std::size_t> orphans;
  for (const Triple& t : candidates) {
    if (seen_links[t.head] >= 2) {
      kept.push_back(t);
    } else {
      ++orphans[t.head];
      ++dropped;
    }
  }
  for (const auto& [e, n] : orphans) {
    log::warn("inductive split: unseen entity " + std::to_string(e) + " has no seen neighbor besides its test edge; dropped " +
              std::to_string(n) + " test triple(s)");
  }
  return kept;
}

}  // namespace detail

/// Samples ⌊|E|·unseen_fraction⌋ unseen entities and partitions the triples.
/// Duplicate input triples are collapsed so no fact can sit on both sides of a split.
inline InductiveSplit make_inductive_split(std::span<const Triple> input, std::size_t num_entities, const SplitConfig& cfg) {
  if (!(cfg.unseen_fraction > 0.0 && cfg.unseen_fraction < 1.0)) {
    throw std::invalid_argument("make_inductive_split: unseen_fraction must lie in (0, 1)");
  }
  if (!(cfg.dev_fraction >= 0.0 && cfg.dev_fraction < 1.0)) {
    throw std::invalid_argument("make_inductive_split: dev_fraction must lie in [0, 1)");
  }
  if (input.empty()) throw std::invalid_argument("make_inductive_split: no triples");
  std::vector<Triple> triples(input.begin(), input.end());
  std::sort(triples.begin(), triples.end());
  triples.erase(std::unique(triples.begin(), triples.end()), triples.end());
  const auto num_unseen = static_cast<std::size_t>(std::floor(static_cast<double>(num_entities) * cfg.unseen_fraction));
  if (num_unseen == 0) {
    throw std::invalid_argument("make_inductive_split: unseen_fraction " + std::to_string(cfg.unseen_fraction) +
                                " selects no entity out of " + std::to_string(num_entities));
  }
  if (num_unseen >= num_entities) throw std::invalid_argument("make_inductive_split: no seen entity would remain");

  const Rng root(cfg.seed, 0x5EED5);
  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    Rng rng = root.fork(static_cast<std::uint64_t>(attempt));
    std::vector<EntityId> order(num_entities);
    std::iota(order.begin(), order.end(), EntityId{0});
    for (std::size_t i = 0; i < num_unseen; ++i) {
      const std::size_t j = i + rng.below(num_entities - i);
      std::swap(order[i], order[j]);
    }
    std::vector<bool> is_unseen(num_entities, false);
    for (std::size_t i = 0; i < num_unseen; ++i) is_unseen[order[i]] = true;

    InductiveSplit s;
    s.num_entities = num_entities;
    s.seed = cfg.seed;
    s.unseen_fraction = cfg.unseen_fraction;
    s.dev_fraction = cfg.dev_fraction;
    for (EntityId e = 0; e < num_entities; ++e) (is_unseen[e] ? s.unseen : s.seen).push_back(e);

    std::vector<Triple> both_seen, head_unseen;
    for (const Triple& t : triples) {
      const bool hu = is_unseen[t.head], tu = is_unseen[t.tail];
      if (!hu && !tu) {
        both_seen.push_back(t);
      } else if (hu && !tu) {
        head_unseen.push_back(t);
        s.aux.push_back(t);
      } else if (!hu && tu) {
        s.aux.push_back(t);
      }
    }
    s.test = detail::drop_orphan_test_triples(std::move(head_unseen), s.aux, is_unseen, s.dropped_test);

    for (std::size_t i = both_seen.size(); i > 1; --i) std::swap(both_seen[i - 1], both_seen[rng.below(i)]);
    const auto num_dev = static_cast<std::size_t>(std::llround(static_cast<double>(both_seen.size()) * cfg.dev_fraction));
    s.dev.assign(both_seen.begin(), both_seen.begin() + static_cast<std::ptrdiff_t>(num_dev));
    s.train.assign(both_seen.begin() + static_cast<std::ptrdiff_t>(num_dev), both_seen.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.dev.begin(), s.dev.end());

    if (!s.train.empty() && !s.test.empty()) return s;
    log::warn("inductive split attempt " + std::to_string(attempt) + " produced an empty train or test set; resampling");
  }
  throw SplitError("make_inductive_split: no usable split after " + std::to_string(cfg.max_attempts) + " attempts");
}

}  // namespace elink
