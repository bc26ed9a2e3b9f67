#include "vienna/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace vienna {

namespace {

constexpr char kMagic[8] = {'V', 'N', 'N', 'A', 'C', 'K', 'P', 'T'};

template <class T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    T out;
    auto* src = reinterpret_cast<const std::uint8_t*>(&v);
    auto* dst = reinterpret_cast<std::uint8_t*>(&out);
    for (std::size_t i = 0; i < sizeof(T); ++i) dst[i] = src[sizeof(T) - 1 - i];
    return out;
  }
}

}  // namespace

void ByteWriter::raw(const void* data, std::size_t n) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  buf_.insert(buf_.end(), p, p + n);
}

void ByteWriter::u32(std::uint32_t v) {
  v = to_little(v);
  raw(&v, sizeof v);
}

void ByteWriter::u64(std::uint64_t v) {
  v = to_little(v);
  raw(&v, sizeof v);
}

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  raw(s.data(), s.size());
}

void ByteWriter::matrix(const Matrix& m) {
  u32(static_cast<std::uint32_t>(m.rows()));
  u32(static_cast<std::uint32_t>(m.cols()));
  if constexpr (std::endian::native == std::endian::little) {
    raw(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
  } else {
    for (Eigen::Index i = 0; i < m.size(); ++i) f64(m.data()[i]);
  }
}

void ByteReader::need(std::size_t n) const {
  if (data_.size() - pos_ < n) throw FormatError("truncated input: need " + std::to_string(n) + " more bytes");
}

void ByteReader::raw(void* out, std::size_t n) {
  need(n);
  std::memcpy(out, data_.data() + pos_, n);
  pos_ += n;
}

std::uint8_t ByteReader::u8() {
  need(1);
  return data_[pos_++];
}

std::uint32_t ByteReader::u32() {
  std::uint32_t v;
  raw(&v, sizeof v);
  return to_little(v);
}

std::uint64_t ByteReader::u64() {
  std::uint64_t v;
  raw(&v, sizeof v);
  return to_little(v);
}

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::string ByteReader::str() {
  const std::uint32_t n = u32();
  need(n);
  std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
  pos_ += n;
  return s;
}

Matrix ByteReader::matrix() {
  const std::uint32_t rows = u32();
  const std::uint32_t cols = u32();
  const std::size_t count = static_cast<std::size_t>(rows) * cols;
  need(count * sizeof(double));
  Matrix m(rows, cols);
  if constexpr (std::endian::native == std::endian::little) {
    raw(m.data(), count * sizeof(double));
  } else {
    for (std::size_t i = 0; i < count; ++i) m.data()[i] = f64();
  }
  return m;
}

std::uint64_t fnv1a(std::span<const std::uint8_t> data, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (std::uint8_t b : data) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a(std::string_view s) {
  return fnv1a(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

ParamSnapshot snapshot(std::span<const NamedParam> params) {
  ParamSnapshot snap;
  snap.reserve(params.size());
  for (const NamedParam& np : params) snap.emplace_back(np.path, np.param->value);
  return snap;
}

void restore(std::span<const NamedParam> params, const ParamSnapshot& snap) {
  if (snap.size() != params.size()) {
    throw FormatError("parameter manifest mismatch: expected " + std::to_string(params.size()) + " entries, got " +
                      std::to_string(snap.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [path, value] = snap[i];
    Matrix& dst = params[i].param->value;
    if (path != params[i].path) {
      throw FormatError("parameter manifest mismatch at entry " + std::to_string(i) + ": expected '" +
                        params[i].path + "', got '" + path + "'");
    }
    if (value.rows() != dst.rows() || value.cols() != dst.cols()) {
      throw FormatError("shape mismatch for '" + path + "': expected " + shape_str(dst) + ", got " +
                        shape_str(value));
    }
    dst = value;
  }
}

Bytes encode_checkpoint(const ParamSnapshot& snap) {
  ByteWriter w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(snap.size()));
  for (const auto& [path, value] : snap) {
    w.str(path);
    w.matrix(value);
  }
  return w.take();
}

ParamSnapshot decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  char magic[8];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw FormatError("not a checkpoint (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t count = r.u32();
  ParamSnapshot snap;
  snap.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string path = r.str();
    Matrix m = r.matrix();
    snap.emplace_back(std::move(path), std::move(m));
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint payload");
  return snap;
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  return Bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void save_checkpoint(const std::filesystem::path& path, std::span<const NamedParam> params) {
  write_file(path, encode_checkpoint(snapshot(params)));
}

ParamSnapshot load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

}  // namespace vienna
