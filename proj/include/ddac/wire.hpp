#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ddac/core.hpp"
#include "ddac/grouplasso.hpp"
#include "ddac/spline.hpp"

namespace ddac::wire {

using Bytes = std::vector<std::uint8_t>;

enum class Kind : std::uint8_t {
  AssignFeatures = 1,
  GramContribution = 2,
  FOperator = 3,
  LocalSelection = 4,
  FittedValues = 5,
  RefineRequest = 6,
  TestRequest = 7,
  TestBlock = 8,
  Shutdown = 9,
  Error = 10,
};

std::string to_string(Kind kind);

// Frame layout: [u32 payload length][u8 kind][u32 sender][payload], all little endian.
inline constexpr std::size_t kHeaderSize = 9;

struct Message {
  Kind kind = Kind::Shutdown;
  std::uint32_t sender = 0;  // 0 = coordinator, workers are 1..m
  Bytes payload;

  friend bool operator==(const Message&, const Message&) = default;
};

Bytes serialize(const Message& msg);
Message deserialize(std::span<const std::uint8_t> frame);
/// Payload length announced by a 9-byte header.
std::uint32_t peek_length(std::span<const std::uint8_t> header);

/// Little-endian payload builder; vectors and matrices carry dimension prefixes.
class Writer {
 public:
  Writer& u64(std::uint64_t v);
  Writer& f64(double v);
  Writer& indices(const std::vector<std::size_t>& v);
  Writer& vector(const Vector& v);
  Writer& matrix(const Matrix& a);         // [rows][cols][column-major data]
  Writer& square_matrix(const Matrix& a);  // [n][n*n data]
  Writer& text(const std::string& s);
  Bytes take() { return std::move(bytes_); }

 private:
  Bytes bytes_;
};

/// Reads what Writer wrote; running off the end raises LengthMismatch.
class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  std::uint64_t u64();
  double f64();
  std::vector<std::size_t> indices();
  Vector vector();
  Matrix matrix();
  Matrix square_matrix();
  std::string text();
  /// Raises LengthMismatch when bytes remain.
  void finish() const;

 private:
  std::span<const std::uint8_t> take(std::size_t count);
  std::uint64_t count_prefix(std::size_t element_size);
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

/// Phase plan sent with the assignment.
enum class Phase : std::uint64_t {
  Decorrelate = 0,  // send the Gram contribution, wait for F
  Direct = 1,       // F = I: fit immediately
  Oracle = 2,       // no fit; wait for a RefineRequest
};

struct AssignFeatures {
  std::uint32_t machine = 1;          // 1-based id the worker answers with
  std::vector<std::size_t> features;  // global, in local order
  std::size_t dn = 0;
  Phase phase = Phase::Decorrelate;
  std::uint64_t cv_seed = 0;
  std::size_t folds = 5;
  std::size_t path_length = 500;
  grouplasso::CvRule cv_rule = grouplasso::CvRule::Min;
  Matrix x;  // n x p_i
  Vector y;  // standardized response
};

struct EncoderRecord {
  std::size_t feature = 0;
  spline::FeatureEncoder encoder;
};

struct LocalSelection {
  std::vector<std::size_t> selected;   // global indices
  std::vector<EncoderRecord> encoders;  // one per selected feature
  Matrix columns;                       // standardized columns, blocks side by side
  double lambda = 0.0;
  std::size_t iterations = 0;
  bool converged = true;
  double cv_error = 0.0;
};

struct TestBlock {
  std::size_t feature = 0;
  std::size_t local = 0;
  Vector beta;
  Matrix psi_tilde;
};

struct ErrorReport {
  std::uint64_t code = 0;
  std::string text;
};

Bytes encode(const AssignFeatures& a);
Bytes encode(const LocalSelection& s);
Bytes encode(const TestBlock& t);
Bytes encode(const ErrorReport& e);

AssignFeatures decode_assign(std::span<const std::uint8_t> payload);
LocalSelection decode_selection(std::span<const std::uint8_t> payload);
TestBlock decode_test_block(std::span<const std::uint8_t> payload);
ErrorReport decode_error(std::span<const std::uint8_t> payload);

}  // namespace ddac::wire
