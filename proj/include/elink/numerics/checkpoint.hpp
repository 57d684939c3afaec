#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "elink/numerics/params.hpp"
#include "elink/numerics/tensor.hpp"
#include <nlohmann/json.hpp>

// Named-tensor container:
//   "ELNKTNSR" | u32 version | u32 count | count x record
//   record = u32 name_len | name | u8 bytes_per_value (4|8) | u32 rank | rank x u64 dim | values
// All integers and values little-endian. A JSON manifest sits next to the
// container at <path>.manifest.json.
namespace elink::checkpoint {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr char kMagic[8] = {'E', 'L', 'N', 'K', 'T', 'N', 'S', 'R'};
inline constexpr std::uint32_t kVersion = 1;

namespace detail {

template <class T>
void put(std::ostream& os, T v) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw FormatError("checkpoint: truncated file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

}  // namespace detail

inline std::filesystem::path manifest_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".manifest.json");
}

/// Writes tensors in the given order; values stored with sizeof(Real) bytes.
template <class Real>
void write_tensors(const std::filesystem::path& path, const std::vector<std::pair<std::string, const Tensor<Real>*>>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path.string() + " for writing");
  os.write(kMagic, sizeof(kMagic));
  detail::put<std::uint32_t>(os, kVersion);
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put<std::uint8_t>(os, static_cast<std::uint8_t>(sizeof(Real)));
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(t->rank()));
    for (std::size_t d : t->shape()) detail::put<std::uint64_t>(os, d);
    for (Real v : t->data()) detail::put<Real>(os, v);
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

/// Reads every tensor, converting stored precision to Real.
template <class Real>
std::map<std::string, Tensor<Real>> read_tensors(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path.string());
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw FormatError("checkpoint: bad magic in " + path.string());
  if (detail::get<std::uint32_t>(is) != kVersion) throw FormatError("checkpoint: unsupported version");
  const auto count = detail::get<std::uint32_t>(is);
  std::map<std::string, Tensor<Real>> out;
  for (std::uint32_t n = 0; n < count; ++n) {
    const auto len = detail::get<std::uint32_t>(is);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw FormatError("checkpoint: truncated name");
    const auto width = detail::get<std::uint8_t>(is);
    const auto rank = detail::get<std::uint32_t>(is);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(detail::get<std::uint64_t>(is));
    Tensor<Real> t(shape);
    for (Real& v : t.data()) {
      if (width == 8) v = static_cast<Real>(detail::get<double>(is));
      else if (width == 4) v = static_cast<Real>(detail::get<float>(is));
      else throw FormatError("checkpoint: unsupported value width " + std::to_string(width));
    }
    out.emplace(std::move(name), std::move(t));
  }
  return out;
}

/// Saves a parameter store plus its manifest. `extra` entries are merged into the manifest.
template <class Real>
void save(const ParamStore<Real>& store, const std::filesystem::path& path, std::uint64_t seed,
          const nlohmann::ordered_json& extra = nlohmann::ordered_json::object()) {
  std::vector<std::pair<std::string, const Tensor<Real>*>> list;
  for (const auto& e : store.entries()) list.emplace_back(e.name, &e.value);
  write_tensors<Real>(path, list);
  nlohmann::ordered_json manifest;
  manifest["format"] = "elink-tensors";
  manifest["version"] = kVersion;
  manifest["precision"] = sizeof(Real) * 8;
  manifest["seed"] = seed;
  manifest["tensors"] = store.size();
  manifest["parameters"] = store.parameter_count();
  for (const auto& [k, v] : extra.items()) manifest[k] = v;
  std::ofstream ms(manifest_path(path));
  if (!ms) throw std::runtime_error("checkpoint: cannot write manifest for " + path.string());
  ms << manifest.dump(2) << '\n';
}

inline nlohmann::ordered_json read_manifest(const std::filesystem::path& path) {
  std::ifstream ms(manifest_path(path));
  if (!ms) throw std::runtime_error("checkpoint: missing manifest " + manifest_path(path).string());
  return nlohmann::ordered_json::parse(ms);
}

/// Loads tensor values into an already-shaped store; names and shapes must match exactly.
template <class Real>
void load_into(ParamStore<Real>& store, const std::filesystem::path& path) {
  auto tensors = read_tensors<Real>(path);
  for (auto& e : store.entries()) {
    auto it = tensors.find(e.name);
    if (it == tensors.end()) throw FormatError("checkpoint: " + path.string() + " lacks tensor '" + e.name + "'");
    if (it->second.shape() != e.value.shape()) {
      throw FormatError("checkpoint: tensor '" + e.name + "' has shape " + shape_string(it->second.shape()) +
                        ", expected " + shape_string(e.value.shape()));
    }
    e.value = std::move(it->second);
  }
  if (tensors.size() != store.size()) throw FormatError("checkpoint: tensor count mismatch in " + path.string());
}

}  // namespace elink::checkpoint
