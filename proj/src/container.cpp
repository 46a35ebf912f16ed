#include "mstyle/container.hpp"

#include "mstyle/errors.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace mstyle {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

void throw_missing_field(const char* key) { throw ParseError(std::string("header is missing field '") + key + "'"); }

void throw_bad_field(const char* key) { throw ParseError(std::string("header field '") + key + "' has the wrong type"); }

const ContainerArray& Container::array(std::string_view name) const {
  for (const auto& a : arrays) {
    if (a.name == name) {
      return a;
    }
  }
  throw ParseError("container has no array named '" + std::string(name) + "'");
}

namespace {

std::size_t numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) {
    n *= d;
  }
  return n;
}

}  // namespace

void write_container(std::ostream& out, std::string_view magic, const Container& c) {
  if (magic.size() != 8) {
    throw std::invalid_argument("container magic must be 8 bytes");
  }
  nlohmann::json header = c.header;
  nlohmann::json arrays = nlohmann::json::array();
  for (const auto& a : c.arrays) {
    if (numel(a.shape) != a.values.size()) {
      throw DimensionError("array '" + a.name + "' holds " + std::to_string(a.values.size()) +
                           " values but its shape needs " + std::to_string(numel(a.shape)));
    }
    arrays.push_back({{"name", a.name}, {"shape", a.shape}});
  }
  header["arrays"] = std::move(arrays);
  const std::string text = header.dump();
  const std::uint64_t length = text.size();
  out.write(magic.data(), 8);
  char len_bytes[8];
  std::memcpy(len_bytes, &length, 8);
  out.write(len_bytes, 8);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& a : c.arrays) {
    out.write(reinterpret_cast<const char*>(a.values.data()), static_cast<std::streamsize>(a.values.size() * 4));
  }
  if (!out) {
    throw std::runtime_error("failed writing container");
  }
}

Container read_container(std::istream& in, std::string_view magic) {
  char found[8] = {};
  in.read(found, 8);
  if (!in || std::string_view(found, 8) != magic) {
    throw ParseError("bad magic: expected '" + std::string(magic) + "'");
  }
  std::uint64_t length = 0;
  in.read(reinterpret_cast<char*>(&length), 8);
  if (!in || length > (std::uint64_t{1} << 32)) {
    throw ParseError("truncated or oversized container header");
  }
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) {
    throw ParseError("truncated container header");
  }
  Container c;
  try {
    c.header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("container header is not valid JSON: ") + e.what());
  }
  const auto specs = json_field<nlohmann::json>(c.header, "arrays");
  c.header.erase("arrays");
  if (!specs.is_array()) {
    throw_bad_field("arrays");
  }
  for (const auto& spec : specs) {
    ContainerArray a;
    a.name = json_field<std::string>(spec, "name");
    a.shape = json_field<std::vector<std::size_t>>(spec, "shape");
    a.values.resize(numel(a.shape));
    in.read(reinterpret_cast<char*>(a.values.data()), static_cast<std::streamsize>(a.values.size() * 4));
    if (!in) {
      throw ParseError("truncated data for array '" + a.name + "'");
    }
    c.arrays.push_back(std::move(a));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw ParseError("trailing bytes after the last array");
  }
  return c;
}

void save_container(const std::filesystem::path& path, std::string_view magic, const Container& c) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  write_container(out, magic, c);
}

Container load_container(const std::filesystem::path& path, std::string_view magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open " + path.string());
  }
  return read_container(in, magic);
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (const char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[value & 0xf];
    value >>= 4;
  }
  return out;
}

}  // namespace mstyle
