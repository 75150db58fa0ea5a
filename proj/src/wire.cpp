#include "ddac/wire.hpp"

#include <bit>
#include <cstring>
#include <limits>

#include <fmt/format.h>

#include "ddac/errors.hpp"

namespace ddac::wire {

namespace {

void put_le(Bytes& out, std::uint64_t v, int width) {
  for (int b = 0; b < width; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

std::uint64_t get_le(const std::uint8_t* p, int width) {
  std::uint64_t v = 0;
  for (int b = 0; b < width; ++b) v |= static_cast<std::uint64_t>(p[b]) << (8 * b);
  return v;
}

bool known_kind(std::uint8_t k) { return k >= 1 && k <= 10; }

}  // namespace

std::string to_string(Kind kind) {
  switch (kind) {
    case Kind::AssignFeatures: return "AssignFeatures";
    case Kind::GramContribution: return "GramContribution";
    case Kind::FOperator: return "FOperator";
    case Kind::LocalSelection: return "LocalSelection";
    case Kind::FittedValues: return "FittedValues";
    case Kind::RefineRequest: return "RefineRequest";
    case Kind::TestRequest: return "TestRequest";
    case Kind::TestBlock: return "TestBlock";
    case Kind::Shutdown: return "Shutdown";
    case Kind::Error: return "Error";
  }
  return "Unknown";
}

Bytes serialize(const Message& msg) {
  if (msg.payload.size() > std::numeric_limits<std::uint32_t>::max())
    fail(ErrorKind::LengthMismatch, "payload exceeds the 4-byte length field");
  Bytes frame;
  frame.reserve(kHeaderSize + msg.payload.size());
  put_le(frame, msg.payload.size(), 4);
  frame.push_back(static_cast<std::uint8_t>(msg.kind));
  put_le(frame, msg.sender, 4);
  frame.insert(frame.end(), msg.payload.begin(), msg.payload.end());
  return frame;
}

std::uint32_t peek_length(std::span<const std::uint8_t> header) {
  if (header.size() < kHeaderSize) fail(ErrorKind::TruncatedFrame, fmt::format("{} header bytes", header.size()));
  return static_cast<std::uint32_t>(get_le(header.data(), 4));
}

Message deserialize(std::span<const std::uint8_t> frame) {
  const auto length = peek_length(frame);
  if (!known_kind(frame[4])) fail(ErrorKind::UnknownKind, fmt::format("kind tag {}", frame[4]));
  const auto available = frame.size() - kHeaderSize;
  if (available < length) fail(ErrorKind::TruncatedFrame, fmt::format("announced {} payload bytes, have {}", length, available));
  if (available > length) fail(ErrorKind::LengthMismatch, fmt::format("announced {} payload bytes, got {}", length, available));
  Message msg;
  msg.kind = static_cast<Kind>(frame[4]);
  msg.sender = static_cast<std::uint32_t>(get_le(frame.data() + 5, 4));
  msg.payload.assign(frame.begin() + kHeaderSize, frame.end());
  return msg;
}

Writer& Writer::u64(std::uint64_t v) {
  put_le(bytes_, v, 8);
  return *this;
}

Writer& Writer::f64(double v) { return u64(std::bit_cast<std::uint64_t>(v)); }

Writer& Writer::indices(const std::vector<std::size_t>& v) {
  u64(v.size());
  for (auto i : v) u64(i);
  return *this;
}

Writer& Writer::vector(const Vector& v) {
  u64(static_cast<std::uint64_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) f64(v(i));
  return *this;
}

Writer& Writer::matrix(const Matrix& a) {
  u64(static_cast<std::uint64_t>(a.rows()));
  u64(static_cast<std::uint64_t>(a.cols()));
  bytes_.reserve(bytes_.size() + 8 * static_cast<std::size_t>(a.size()));
  for (Eigen::Index i = 0; i < a.size(); ++i) f64(a.data()[i]);
  return *this;
}

Writer& Writer::square_matrix(const Matrix& a) {
  if (a.rows() != a.cols()) fail(ErrorKind::ShapeMismatch, "square_matrix needs a square matrix");
  u64(static_cast<std::uint64_t>(a.rows()));
  bytes_.reserve(bytes_.size() + 8 * static_cast<std::size_t>(a.size()));
  for (Eigen::Index i = 0; i < a.size(); ++i) f64(a.data()[i]);
  return *this;
}

Writer& Writer::text(const std::string& s) {
  u64(s.size());
  bytes_.insert(bytes_.end(), s.begin(), s.end());
  return *this;
}

std::span<const std::uint8_t> Reader::take(std::size_t count) {
  if (count > bytes_.size() - pos_)
    fail(ErrorKind::LengthMismatch, fmt::format("payload needs {} more bytes, {} left", count, bytes_.size() - pos_));
  auto out = bytes_.subspan(pos_, count);
  pos_ += count;
  return out;
}

std::uint64_t Reader::count_prefix(std::size_t element_size) {
  const auto count = u64();
  if (count > (bytes_.size() - pos_) / element_size)
    fail(ErrorKind::LengthMismatch, fmt::format("dimension prefix {} exceeds the remaining payload", count));
  return count;
}

std::uint64_t Reader::u64() { return get_le(take(8).data(), 8); }

double Reader::f64() { return std::bit_cast<double>(u64()); }

std::vector<std::size_t> Reader::indices() {
  const auto count = count_prefix(8);
  std::vector<std::size_t> out(count);
  for (auto& v : out) v = u64();
  return out;
}

Vector Reader::vector() {
  const auto count = count_prefix(8);
  Vector out(static_cast<Eigen::Index>(count));
  for (Eigen::Index i = 0; i < out.size(); ++i) out(i) = f64();
  return out;
}

Matrix Reader::matrix() {
  const auto rows = u64();
  const auto cols = count_prefix(1);
  if (rows != 0 && cols > (bytes_.size() - pos_) / 8 / rows)
    fail(ErrorKind::LengthMismatch, fmt::format("{}x{} matrix exceeds the remaining payload", rows, cols));
  Matrix out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = f64();
  return out;
}

Matrix Reader::square_matrix() {
  const auto n = count_prefix(1);
  if (n != 0 && n > (bytes_.size() - pos_) / 8 / n)
    fail(ErrorKind::LengthMismatch, fmt::format("{}x{} matrix exceeds the remaining payload", n, n));
  Matrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = f64();
  return out;
}

std::string Reader::text() {
  const auto count = count_prefix(1);
  const auto raw = take(count);
  return std::string(raw.begin(), raw.end());
}

void Reader::finish() const {
  if (pos_ != bytes_.size()) fail(ErrorKind::LengthMismatch, fmt::format("{} trailing payload bytes", bytes_.size() - pos_));
}

namespace {

void put_encoder(Writer& w, const EncoderRecord& rec) {
  const auto& b = rec.encoder.basis;
  w.u64(rec.feature).u64(static_cast<std::uint64_t>(b.degree)).f64(b.lower).f64(b.upper);
  w.vector(Eigen::Map<const Vector>(b.interior_knots.data(), static_cast<Eigen::Index>(b.interior_knots.size())));
  w.vector(rec.encoder.means).vector(rec.encoder.sds);
}

EncoderRecord get_encoder(Reader& r) {
  EncoderRecord rec;
  rec.feature = r.u64();
  auto& b = rec.encoder.basis;
  b.feature_index = rec.feature;
  b.degree = static_cast<int>(r.u64());
  b.lower = r.f64();
  b.upper = r.f64();
  const Vector knots = r.vector();
  b.interior_knots.assign(knots.data(), knots.data() + knots.size());
  rec.encoder.means = r.vector();
  rec.encoder.sds = r.vector();
  if (b.degree < 1 || b.degree > 7 || rec.encoder.means.size() != rec.encoder.sds.size() ||
      static_cast<std::size_t>(rec.encoder.means.size()) + 1 != b.dn())
    fail(ErrorKind::ProtocolError, "inconsistent encoder record");
  return rec;
}

}  // namespace

Bytes encode(const AssignFeatures& a) {
  Writer w;
  w.u64(a.machine).indices(a.features).u64(a.dn).u64(static_cast<std::uint64_t>(a.phase)).u64(a.cv_seed).u64(a.folds).u64(a.path_length).u64(static_cast<std::uint64_t>(a.cv_rule));
  w.matrix(a.x).vector(a.y);
  return w.take();
}

AssignFeatures decode_assign(std::span<const std::uint8_t> payload) {
  Reader r(payload);
  AssignFeatures a;
  const auto machine = r.u64();
  if (machine == 0 || machine > std::numeric_limits<std::uint32_t>::max())
    fail(ErrorKind::ProtocolError, fmt::format("machine id {} out of range", machine));
  a.machine = static_cast<std::uint32_t>(machine);
  a.features = r.indices();
  a.dn = r.u64();
  const auto phase = r.u64();
  if (phase > 2) fail(ErrorKind::ProtocolError, fmt::format("unknown phase plan {}", phase));
  a.phase = static_cast<Phase>(phase);
  a.cv_seed = r.u64();
  a.folds = r.u64();
  a.path_length = r.u64();
  const auto rule = r.u64();
  if (rule > 1) fail(ErrorKind::ProtocolError, fmt::format("unknown cv rule code {}", rule));
  a.cv_rule = static_cast<grouplasso::CvRule>(rule);
  a.x = r.matrix();
  a.y = r.vector();
  r.finish();
  return a;
}

Bytes encode(const LocalSelection& s) {
  if (s.encoders.size() != s.selected.size()) fail(ErrorKind::ShapeMismatch, "one encoder per selected feature");
  Writer w;
  w.indices(s.selected);
  for (const auto& rec : s.encoders) put_encoder(w, rec);
  w.matrix(s.columns).f64(s.lambda).u64(s.iterations).u64(s.converged ? 1 : 0).f64(s.cv_error);
  return w.take();
}

LocalSelection decode_selection(std::span<const std::uint8_t> payload) {
  Reader r(payload);
  LocalSelection s;
  s.selected = r.indices();
  for (std::size_t k = 0; k < s.selected.size(); ++k) s.encoders.push_back(get_encoder(r));
  s.columns = r.matrix();
  s.lambda = r.f64();
  s.iterations = r.u64();
  s.converged = r.u64() != 0;
  s.cv_error = r.f64();
  r.finish();
  return s;
}

Bytes encode(const TestBlock& t) {
  Writer w;
  w.u64(t.feature).u64(t.local).vector(t.beta).matrix(t.psi_tilde);
  return w.take();
}

TestBlock decode_test_block(std::span<const std::uint8_t> payload) {
  Reader r(payload);
  TestBlock t;
  t.feature = r.u64();
  t.local = r.u64();
  t.beta = r.vector();
  t.psi_tilde = r.matrix();
  r.finish();
  return t;
}

Bytes encode(const ErrorReport& e) {
  Writer w;
  w.u64(e.code).text(e.text);
  return w.take();
}

ErrorReport decode_error(std::span<const std::uint8_t> payload) {
  Reader r(payload);
  ErrorReport e;
  e.code = r.u64();
  e.text = r.text();
  r.finish();
  return e;
}

}  // namespace ddac::wire
