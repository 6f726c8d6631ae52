#pragma once

// Little-endian binary tensor files with JSON sidecars.
//
// Tensor file layout:
//   bytes 0..7   magic "SOZTENS\0"
//   u32          format version
//   u32          dtype (1 = f32, 2 = f64)
//   u32          rank
//   u32          reserved, zero
//   u64 x rank   dimensions, outermost first
//   payload      row-major elements, little-endian

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace soz::io {

using json = nlohmann::json;

inline constexpr std::uint32_t kTensorVersion = 1;

enum class DType : std::uint32_t { f32 = 1, f64 = 2 };

template <typename T>
struct Tensor {
  std::vector<std::uint64_t> shape;
  std::vector<T> data;

  std::uint64_t numel() const {
    std::uint64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
};

void write_tensor(const std::filesystem::path& path,
                  std::span<const std::uint64_t> shape,
                  std::span<const float> data);
void write_tensor(const std::filesystem::path& path,
                  std::span<const std::uint64_t> shape,
                  std::span<const double> data);

Tensor<float> read_tensor_f32(const std::filesystem::path& path);
Tensor<double> read_tensor_f64(const std::filesystem::path& path);

json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const json& j);

// Raw little-endian encode/decode used by the tensor and checkpoint formats.
void append_le(std::string& out, std::span<const double> values);
void append_le(std::string& out, std::span<const float> values);
void append_u32(std::string& out, std::uint32_t v);
void append_u64(std::string& out, std::uint64_t v);

class ByteReader {
 public:
  explicit ByteReader(std::string bytes, std::string origin);
  std::uint32_t u32();
  std::uint64_t u64();
  void raw(void* dst, std::size_t n);
  void read_f32(std::span<float> dst);
  void read_f64(std::span<double> dst);
  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  const std::string& origin() const { return origin_; }

 private:
  void need(std::size_t n);
  std::string bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace soz::io
