#include "soz/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "soz/error.hpp"

namespace soz::io {

namespace {

constexpr char kMagic[8] = {'S', 'O', 'Z', 'T', 'E', 'N', 'S', '\0'};

template <typename U>
U to_le(U v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    U r = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      r = (r << 8) | (v & 0xff);
      v >>= 8;
    }
    return r;
  }
}

template <typename T, typename U>
void append_values(std::string& out, std::span<const T> values) {
  static_assert(sizeof(T) == sizeof(U));
  const std::size_t start = out.size();
  out.resize(start + values.size() * sizeof(T));
  char* p = out.data() + start;
  for (T v : values) {
    U bits = to_le(std::bit_cast<U>(v));
    std::memcpy(p, &bits, sizeof(U));
    p += sizeof(U);
  }
}

template <typename T>
void write_tensor_impl(const std::filesystem::path& path,
                       std::span<const std::uint64_t> shape,
                       std::span<const T> data, DType dtype) {
  std::uint64_t n = 1;
  for (auto d : shape) n *= d;
  if (n != data.size()) {
    throw DomainError("tensor shape does not match element count for " +
                      path.string());
  }
  std::string out(kMagic, sizeof(kMagic));
  append_u32(out, kTensorVersion);
  append_u32(out, static_cast<std::uint32_t>(dtype));
  append_u32(out, static_cast<std::uint32_t>(shape.size()));
  append_u32(out, 0);
  for (auto d : shape) append_u64(out, d);
  append_le(out, data);
  write_file(path, out);
}

template <typename T>
Tensor<T> read_tensor_impl(const std::filesystem::path& path, DType want) {
  ByteReader r(read_file(path), path.string());
  char magic[8];
  r.raw(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ParseError("bad tensor magic in " + path.string(), 0);
  }
  const auto version = r.u32();
  if (version != kTensorVersion) {
    throw VersionError("tensor file " + path.string() + " has version " +
                       std::to_string(version) + ", expected " +
                       std::to_string(kTensorVersion));
  }
  const std::size_t dtype_offset = r.offset();
  const auto dtype = r.u32();
  if (dtype != static_cast<std::uint32_t>(want)) {
    throw ParseError("unexpected dtype " + std::to_string(dtype) + " in " +
                         path.string(),
                     dtype_offset);
  }
  const std::size_t rank_offset = r.offset();
  const auto rank = r.u32();
  if (rank > 8) {
    throw ParseError("implausible tensor rank in " + path.string(),
                     rank_offset);
  }
  r.u32();
  Tensor<T> t;
  t.shape.resize(rank);
  for (auto& d : t.shape) d = r.u64();
  const std::uint64_t n = t.numel();
  if (r.remaining() != n * sizeof(T)) {
    throw ParseError("payload size mismatch in " + path.string() +
                         ": expected " + std::to_string(n * sizeof(T)) +
                         " bytes, found " + std::to_string(r.remaining()),
                     r.offset() + std::min<std::uint64_t>(r.remaining(),
                                                          n * sizeof(T)));
  }
  t.data.resize(n);
  if constexpr (std::is_same_v<T, float>) {
    r.read_f32(t.data);
  } else {
    r.read_f64(t.data);
  }
  return t;
}

}  // namespace

void append_u32(std::string& out, std::uint32_t v) {
  v = to_le(v);
  out.append(reinterpret_cast<const char*>(&v), sizeof(v));
}

void append_u64(std::string& out, std::uint64_t v) {
  v = to_le(v);
  out.append(reinterpret_cast<const char*>(&v), sizeof(v));
}

void append_le(std::string& out, std::span<const double> values) {
  append_values<double, std::uint64_t>(out, values);
}

void append_le(std::string& out, std::span<const float> values) {
  append_values<float, std::uint32_t>(out, values);
}

ByteReader::ByteReader(std::string bytes, std::string origin)
    : bytes_(std::move(bytes)), origin_(std::move(origin)) {}

void ByteReader::need(std::size_t n) {
  if (remaining() < n) {
    throw ParseError("unexpected end of data in " + origin_, bytes_.size());
  }
}

void ByteReader::raw(void* dst, std::size_t n) {
  need(n);
  std::memcpy(dst, bytes_.data() + pos_, n);
  pos_ += n;
}

std::uint32_t ByteReader::u32() {
  std::uint32_t v;
  raw(&v, sizeof(v));
  return to_le(v);
}

std::uint64_t ByteReader::u64() {
  std::uint64_t v;
  raw(&v, sizeof(v));
  return to_le(v);
}

void ByteReader::read_f32(std::span<float> dst) {
  need(dst.size() * 4);
  for (auto& x : dst) {
    std::uint32_t bits;
    std::memcpy(&bits, bytes_.data() + pos_, 4);
    x = std::bit_cast<float>(to_le(bits));
    pos_ += 4;
  }
}

void ByteReader::read_f64(std::span<double> dst) {
  need(dst.size() * 8);
  for (auto& x : dst) {
    std::uint64_t bits;
    std::memcpy(&bits, bytes_.data() + pos_, 8);
    x = std::bit_cast<double>(to_le(bits));
    pos_ += 8;
  }
}

void write_tensor(const std::filesystem::path& path,
                  std::span<const std::uint64_t> shape,
                  std::span<const float> data) {
  write_tensor_impl(path, shape, data, DType::f32);
}

void write_tensor(const std::filesystem::path& path,
                  std::span<const std::uint64_t> shape,
                  std::span<const double> data) {
  write_tensor_impl(path, shape, data, DType::f64);
}

Tensor<float> read_tensor_f32(const std::filesystem::path& path) {
  return read_tensor_impl<float>(path, DType::f32);
}

Tensor<double> read_tensor_f64(const std::filesystem::path& path) {
  return read_tensor_impl<double>(path, DType::f64);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error("cannot open " + path.string() + " for reading");
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error("cannot open " + path.string() + " for writing");
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw Error("write failed for " + path.string());
  }
}

json read_json(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("malformed JSON in " + path.string() + ": " + e.what(),
                     e.byte);
  }
}

void write_json(const std::filesystem::path& path, const json& j) {
  write_file(path, j.dump(2) + "\n");
}

}  // namespace soz::io
