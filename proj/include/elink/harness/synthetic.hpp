#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "elink/kg/triple_io.hpp"
#include "elink/numerics/rng.hpp"

namespace elink {

/// A generated knowledge graph with readable labels.
struct SyntheticKG {
  Vocabulary vocab;
  std::vector<Triple> triples;
};

/// Compositional KG with the planted rule lives_in(x, y) ∧ located_in(y, z) ⇒ nationality(x, z).
///
/// Countries own `cities_per_country` cities each; every city has exactly one
/// resident, so a co-resident's nationality never offers a shortcut. Distractor
/// relations (knows between persons, near between cities) only link entities of
/// different countries, so they never lead to the right country in two hops.
struct CompositionalSpec {
  std::size_t countries = 4;
  std::size_t cities_per_country = 7;
  std::size_t knows_per_person = 2;
  std::size_t near_per_city = 1;
  std::uint64_t seed = 0;
};

inline SyntheticKG make_compositional_kg(const CompositionalSpec& spec = {}) {
  SyntheticKG kg;
  Vocabulary& v = kg.vocab;
  const RelationId lives_in = v.relation("lives_in");
  const RelationId located_in = v.relation("located_in");
  const RelationId nationality = v.relation("nationality");
  const RelationId knows = v.relation("knows");
  const RelationId near = v.relation("near");

  std::vector<EntityId> country, city, person;
  std::vector<std::size_t> city_country;
  for (std::size_t c = 0; c < spec.countries; ++c) country.push_back(v.entity("country_" + std::to_string(c)));
  for (std::size_t c = 0; c < spec.countries; ++c) {
    for (std::size_t k = 0; k < spec.cities_per_country; ++k) {
      city.push_back(v.entity("city_" + std::to_string(c) + "_" + std::to_string(k)));
      city_country.push_back(c);
      person.push_back(v.entity("person_" + std::to_string(c) + "_" + std::to_string(k)));
    }
  }
  for (std::size_t i = 0; i < city.size(); ++i) {
    kg.triples.push_back({city[i], located_in, country[city_country[i]]});
    kg.triples.push_back({person[i], lives_in, city[i]});
    kg.triples.push_back({person[i], nationality, country[city_country[i]]});
  }
  Rng rng(spec.seed, 0xC0315);
  auto other_country_pick = [&](std::size_t i) {
    for (;;) {
      const std::size_t j = rng.below(city.size());
      if (city_country[j] != city_country[i]) return j;
    }
  };
  for (std::size_t i = 0; i < person.size(); ++i) {
    for (std::size_t k = 0; k < spec.knows_per_person; ++k) kg.triples.push_back({person[i], knows, person[other_country_pick(i)]});
  }
  for (std::size_t i = 0; i < city.size(); ++i) {
    for (std::size_t k = 0; k < spec.near_per_city; ++k) kg.triples.push_back({city[i], near, city[other_country_pick(i)]});
  }
  return kg;
}

/// 20-entity scorer fixture: 4 hubs, 4 colors, 12 items; item k is a
/// member_of hub (k mod 4) and has_color color (k mod 4).
inline SyntheticKG make_color_hub_kg() {
  SyntheticKG kg;
  Vocabulary& v = kg.vocab;
  const RelationId has_color = v.relation("has_color");
  const RelationId member_of = v.relation("member_of");
  std::vector<EntityId> hub, color;
  for (int k = 0; k < 4; ++k) hub.push_back(v.entity("hub_" + std::to_string(k)));
  for (int k = 0; k < 4; ++k) color.push_back(v.entity("color_" + std::to_string(k)));
  for (std::size_t k = 0; k < 12; ++k) {
    const EntityId item = v.entity("item_" + std::to_string(k));
    kg.triples.push_back({item, member_of, hub[k % 4]});
    kg.triples.push_back({item, has_color, color[k % 4]});
  }
  return kg;
}

}  // namespace elink
