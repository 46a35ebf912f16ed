#pragma once

// Binary container shared by dataset and checkpoint files:
//   8-byte magic | u64 little-endian header length | UTF-8 JSON header | float32 LE arrays
// The header's "arrays" list gives each array's name and shape in storage order.

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mstyle {

struct ContainerArray {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<float> values;
};

struct Container {
  nlohmann::json header = nlohmann::json::object();
  std::vector<ContainerArray> arrays;

  const ContainerArray& array(std::string_view name) const;
};

void write_container(std::ostream& out, std::string_view magic, const Container& c);
Container read_container(std::istream& in, std::string_view magic);

void save_container(const std::filesystem::path& path, std::string_view magic, const Container& c);
Container load_container(const std::filesystem::path& path, std::string_view magic);

/// 64-bit FNV-1a, stable across platforms; used for run names and stream digests.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

[[noreturn]] void throw_missing_field(const char* key);
[[noreturn]] void throw_bad_field(const char* key);

/// Reads `key` from `j` as T, raising ParseError that names the key.
template <typename T>
T json_field(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw_missing_field(key);
  }
  try {
    return it->template get<T>();
  } catch (const nlohmann::json::exception&) {
    throw_bad_field(key);
  }
}

}  // namespace mstyle
