#pragma once

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include "elink/kg/split.hpp"
#include "elink/kg/triple_io.hpp"
#include <nlohmann/json.hpp>

// On-disk split layout inside one directory:
//   train.txt dev.txt test.txt aux.txt  labelled triples
//   vocab.tsv                           symbol table
//   split_manifest.json                 seed, fractions, counts, unseen ids
namespace elink {

struct LoadedSplit {
  Vocabulary vocab;
  InductiveSplit split;
};

inline void write_split(const std::filesystem::path& dir, const InductiveSplit& split, const Vocabulary& vocab) {
  std::filesystem::create_directories(dir);
  auto write_file = [&](const char* name, const std::vector<Triple>& triples) {
    std::ofstream os(dir / name);
    if (!os) throw std::runtime_error("cannot write " + (dir / name).string());
    write_triples(os, triples, vocab);
  };
  write_file("train.txt", split.train);
  write_file("dev.txt", split.dev);
  write_file("test.txt", split.test);
  write_file("aux.txt", split.aux);
  {
    std::ofstream os(dir / "vocab.tsv");
    vocab.write(os);
  }
  nlohmann::ordered_json m;
  m["seed"] = split.seed;
  m["unseen_fraction"] = split.unseen_fraction;
  m["dev_fraction"] = split.dev_fraction;
  m["num_entities"] = split.num_entities;
  m["num_base_relations"] = vocab.num_relations();
  m["counts"] = {{"seen", split.seen.size()},   {"unseen", split.unseen.size()}, {"train", split.train.size()},
                 {"dev", split.dev.size()},     {"test", split.test.size()},     {"aux", split.aux.size()},
                 {"dropped_test", split.dropped_test}};
  m["unseen"] = split.unseen;
  std::ofstream os(dir / "split_manifest.json");
  os << m.dump(2) << '\n';
}

inline LoadedSplit read_split(const std::filesystem::path& dir) {
  LoadedSplit out;
  {
    std::ifstream is(dir / "vocab.tsv");
    if (!is) throw std::runtime_error("missing " + (dir / "vocab.tsv").string());
    out.vocab = Vocabulary::read(is, (dir / "vocab.tsv").string());
  }
  auto read_file = [&](const char* name) {
    std::ifstream is(dir / name);
    if (!is) throw std::runtime_error("missing " + (dir / name).string());
    return parse_triples_fixed(is, out.vocab, (dir / name).string());
  };
  InductiveSplit& s = out.split;
  s.train = read_file("train.txt");
  s.dev = read_file("dev.txt");
  s.test = read_file("test.txt");
  s.aux = read_file("aux.txt");
  std::ifstream ms(dir / "split_manifest.json");
  if (!ms) throw std::runtime_error("missing " + (dir / "split_manifest.json").string());
  const auto m = nlohmann::json::parse(ms);
  s.num_entities = out.vocab.num_entities();
  s.seed = m.at("seed").get<std::uint64_t>();
  s.unseen_fraction = m.at("unseen_fraction").get<double>();
  s.dev_fraction = m.at("dev_fraction").get<double>();
  s.dropped_test = m.at("counts").at("dropped_test").get<std::size_t>();
  std::vector<bool> unseen(s.num_entities, false);
  for (EntityId e : m.at("unseen").get<std::vector<EntityId>>()) {
    if (e >= s.num_entities) throw std::runtime_error("split manifest: unseen id out of range");
    unseen[e] = true;
  }
  for (EntityId e = 0; e < s.num_entities; ++e) (unseen[e] ? s.unseen : s.seen).push_back(e);
  return out;
}

}  // namespace elink
