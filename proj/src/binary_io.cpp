#include "mprf/binary_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <istream>
#include <ostream>

namespace mprf::io {

namespace {
constexpr std::array<char, 4> kMagic{'M', 'P', 'R', 'F'};
// Guard against absurd allocations from corrupt headers.
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;
}  // namespace

void BinaryWriter::bytes(const unsigned char* data, std::size_t n) {
  out_.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out_) throw FormatError("binary write failed");
}

void BinaryWriter::header(RecordType type) {
  bytes(reinterpret_cast<const unsigned char*>(kMagic.data()), kMagic.size());
  u8(static_cast<std::uint8_t>(type));
}

void BinaryWriter::u8(std::uint8_t v) { bytes(&v, 1); }

void BinaryWriter::u32(std::uint32_t v) {
  std::array<unsigned char, 4> b{};
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  bytes(b.data(), b.size());
}

void BinaryWriter::u64(std::uint64_t v) {
  std::array<unsigned char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  bytes(b.data(), b.size());
}

void BinaryWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

void BinaryWriter::f32_matrix(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) f32(static_cast<float>(m(r, c)));
  }
}

void BinaryReader::bytes(unsigned char* data, std::size_t n) {
  in_.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n));
  if (in_.gcount() != static_cast<std::streamsize>(n)) {
    throw FormatError("unexpected end of binary record");
  }
}

void BinaryReader::expect_header(RecordType type) {
  std::array<unsigned char, 4> magic{};
  bytes(magic.data(), magic.size());
  if (std::memcmp(magic.data(), kMagic.data(), kMagic.size()) != 0) {
    throw FormatError("bad magic (expected MPRF)");
  }
  const auto tag = u8();
  if (tag != static_cast<std::uint8_t>(type)) {
    throw FormatError("unexpected record type " + std::to_string(tag) + " (expected " +
                      std::to_string(static_cast<int>(type)) + ")");
  }
}

std::uint8_t BinaryReader::u8() {
  unsigned char v = 0;
  bytes(&v, 1);
  return v;
}

std::uint32_t BinaryReader::u32() {
  std::array<unsigned char, 4> b{};
  bytes(b.data(), b.size());
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t{b[i]} << (8 * i);
  return v;
}

std::uint64_t BinaryReader::u64() {
  std::array<unsigned char, 8> b{};
  bytes(b.data(), b.size());
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{b[i]} << (8 * i);
  return v;
}

float BinaryReader::f32() { return std::bit_cast<float>(u32()); }

Eigen::MatrixXd BinaryReader::f32_matrix(std::uint64_t rows, std::uint64_t cols) {
  if (cols != 0 && rows > kMaxElements / cols) throw FormatError("matrix too large");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = f32();
  }
  return m;
}

}  // namespace mprf::io
