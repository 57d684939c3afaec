#pragma once

#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "elink/kg/types.hpp"

namespace elink {

/// Malformed triple or vocabulary line; carries the 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Label <-> dense id maps for entities and relations, in first-encounter order.
class Vocabulary {
 public:
  EntityId entity(const std::string& label) { return intern(label, entities_, entity_index_); }
  RelationId relation(const std::string& label) { return intern(label, relations_, relation_index_); }

  std::optional<EntityId> find_entity(const std::string& label) const { return find(label, entity_index_); }
  std::optional<RelationId> find_relation(const std::string& label) const { return find(label, relation_index_); }

  const std::string& entity_label(EntityId e) const { return entities_.at(e); }
  const std::string& relation_label(RelationId r) const { return relations_.at(r); }

  std::size_t num_entities() const noexcept { return entities_.size(); }
  std::size_t num_relations() const noexcept { return relations_.size(); }
  RelationSpace relation_space() const { return RelationSpace(relations_.size()); }

  /// Sidecar format: one "entity<TAB>label<TAB>id" or "relation<TAB>label<TAB>id" line per symbol.
  void write(std::ostream& os) const {
    for (std::size_t i = 0; i < entities_.size(); ++i) os << "entity\t" << entities_[i] << '\t' << i << '\n';
    for (std::size_t i = 0; i < relations_.size(); ++i) os << "relation\t" << relations_[i] << '\t' << i << '\n';
  }

  static Vocabulary read(std::istream& is, const std::string& source = "vocabulary") {
    Vocabulary v;
    std::string line;
    std::size_t n = 0;
    while (std::getline(is, line)) {
      ++n;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const auto f = split_tabs(line);
      if (f.size() != 3) throw ParseError(source, n, "expected kind, label and id");
      std::size_t id = 0;
      try {
        id = std::stoul(f[2]);
      } catch (const std::exception&) {
        throw ParseError(source, n, "bad id '" + f[2] + "'");
      }
      if (f[0] == "entity") {
        if (id != v.entities_.size() || v.entity(f[1]) != id) throw ParseError(source, n, "entity ids must be dense and ordered");
      } else if (f[0] == "relation") {
        if (id != v.relations_.size() || v.relation(f[1]) != id) throw ParseError(source, n, "relation ids must be dense and ordered");
      } else {
        throw ParseError(source, n, "unknown symbol kind '" + f[0] + "'");
      }
    }
    return v;
  }

  static std::vector<std::string> split_tabs(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      out.emplace_back(line.substr(start, tab - start));
      if (tab == std::string_view::npos) break;
      start = tab + 1;
    }
    return out;
  }

 private:
  template <class Id>
  static Id intern(const std::string& label, std::vector<std::string>& labels, std::unordered_map<std::string, Id>& index) {
    auto [it, inserted] = index.try_emplace(label, static_cast<Id>(labels.size()));
    if (inserted) labels.push_back(label);
    return it->second;
  }
  template <class Id>
  static std::optional<Id> find(const std::string& label, const std::unordered_map<std::string, Id>& index) {
    auto it = index.find(label);
    if (it == index.end()) return std::nullopt;
    return it->second;
  }

  std::vector<std::string> entities_;
  std::vector<std::string> relations_;
  std::unordered_map<std::string, EntityId> entity_index_;
  std::unordered_map<std::string, RelationId> relation_index_;
};

/// Parses "head<TAB>relation<TAB>tail" lines, extending `vocab` in first-encounter order.
inline std::vector<Triple> parse_triples(std::istream& is, Vocabulary& vocab, const std::string& source = "<stream>") {
  std::vector<Triple> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = Vocabulary::split_tabs(line);
    if (f.size() != 3) {
      throw ParseError(source, n, "expected 3 tab-separated fields, found " + std::to_string(f.size()));
    }
    const EntityId h = vocab.entity(f[0]);
    const RelationId r = vocab.relation(f[1]);
    const EntityId t = vocab.entity(f[2]);
    out.push_back({h, r, t});
  }
  return out;
}

inline std::vector<Triple> load_triples(const std::filesystem::path& path, Vocabulary& vocab) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open triple file " + path.string());
  return parse_triples(is, vocab, path.string());
}

/// Parses labelled triples against a fixed vocabulary; unknown labels are errors.
inline std::vector<Triple> parse_triples_fixed(std::istream& is, const Vocabulary& vocab, const std::string& source) {
  std::vector<Triple> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = Vocabulary::split_tabs(line);
    if (f.size() != 3) throw ParseError(source, n, "expected 3 tab-separated fields, found " + std::to_string(f.size()));
    const auto h = vocab.find_entity(f[0]);
    const auto r = vocab.find_relation(f[1]);
    const auto t = vocab.find_entity(f[2]);
    if (!h || !r || !t) throw ParseError(source, n, "label not in vocabulary");
    out.push_back({*h, *r, *t});
  }
  return out;
}

inline void write_triples(std::ostream& os, const std::vector<Triple>& triples, const Vocabulary& vocab) {
  for (const Triple& t : triples) {
    os << vocab.entity_label(t.head) << '\t' << vocab.relation_label(t.rel) << '\t' << vocab.entity_label(t.tail) << '\n';
  }
}

}  // namespace elink
