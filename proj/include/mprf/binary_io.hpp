#pragma once

// Little-endian record streams shared by every binary file the pipeline
// reads or writes. Each file starts with the 4-byte magic "MPRF" followed by a
// one-byte record-type tag.

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>

namespace mprf::io {

enum class RecordType : std::uint8_t {
  kClusterBank = 1,
  kGlobalIndex = 2,
  kRefinementStore = 3,
  kLidarScan = 4,
  kPatchEmbedding = 5,
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& out) : out_(out) {}

  void header(RecordType type);
  void u8(std::uint8_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  /// Row-major f32 dump of a dense matrix.
  void f32_matrix(const Eigen::Ref<const Eigen::MatrixXd>& m);

 private:
  void bytes(const unsigned char* data, std::size_t n);
  std::ostream& out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::istream& in) : in_(in) {}

  /// Consumes the magic and tag; throws FormatError if either is wrong.
  void expect_header(RecordType type);
  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  Eigen::MatrixXd f32_matrix(std::uint64_t rows, std::uint64_t cols);

 private:
  void bytes(unsigned char* data, std::size_t n);
  std::istream& in_;
};

}  // namespace mprf::io
