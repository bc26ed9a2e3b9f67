#pragma once

// Little-endian binary encoding shared by checkpoints and trainer messages.

#include "vienna/optimizer.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace vienna {

using Bytes = std::vector<std::uint8_t>;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void str(std::string_view s);
  void raw(const void* data, std::size_t n);
  /// rows, cols, then row-major float64 payload.
  void matrix(const Matrix& m);

  const Bytes& bytes() const { return buf_; }
  Bytes take() { return std::move(buf_); }

 private:
  Bytes buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::string str();
  void raw(void* out, std::size_t n);
  Matrix matrix();

  bool done() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const;
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::span<const std::uint8_t> data, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(std::string_view s);

using ParamSnapshot = std::vector<std::pair<std::string, Matrix>>;

ParamSnapshot snapshot(std::span<const NamedParam> params);
/// Copies values into `params`; paths and shapes must match exactly.
void restore(std::span<const NamedParam> params, const ParamSnapshot& snap);

// Checkpoint: "VNNACKPT", u32 version, u32 count, then per parameter
// {str path, u32 rows, u32 cols, rows*cols little-endian float64}.
inline constexpr std::uint32_t kCheckpointVersion = 1;

Bytes encode_checkpoint(const ParamSnapshot& snap);
ParamSnapshot decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, std::span<const NamedParam> params);
ParamSnapshot load_checkpoint(const std::filesystem::path& path);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace vienna
