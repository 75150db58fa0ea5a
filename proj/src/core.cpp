#include "ddac/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "ddac/errors.hpp"

namespace ddac {

std::uint64_t Rng::below(std::uint64_t bound) {
  if (bound == 0) fail(ErrorKind::InvalidArgument, "Rng::below bound must be positive");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t draw = engine_();
  while (draw >= limit) draw = engine_();
  return draw % bound;
}

double Rng::normal() {
  if (spare_) {
    const double out = *spare_;
    spare_.reset();
    return out;
  }
  // Marsaglia polar method.
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double scale = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * scale;
  return u * scale;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double GroundTruth::component(std::size_t j, double x) const {
  double total = 0.0;
  for (const auto& term : terms)
    if (term.feature == j) total += term.eval(x);
  return total;
}

double GroundTruth::h_at(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
  double total = 0.0;
  for (const auto& term : terms) total += term.eval(row(static_cast<Eigen::Index>(term.feature)));
  return total;
}

Vector GroundTruth::h(const Matrix& x) const {
  Vector out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = h_at(x.row(i));
  return out;
}

Dataset::Dataset(Vector y, Matrix x, std::optional<GroundTruth> truth, std::vector<std::string> names)
    : y_(std::move(y)), x_(std::move(x)), truth_(std::move(truth)), names_(std::move(names)) {
  if (y_.size() != x_.rows())
    fail(ErrorKind::ShapeMismatch, fmt::format("response has {} rows, covariates {}", y_.size(), x_.rows()));
  if (y_.size() < 2) fail(ErrorKind::TooFewRows, fmt::format("need at least 2 rows, got {}", y_.size()));
  if (x_.cols() < 1) fail(ErrorKind::InvalidArgument, "dataset needs at least one covariate");
  if (!y_.allFinite()) fail(ErrorKind::InvalidArgument, "response contains non-finite values");
  if (names_.empty()) {
    names_.reserve(static_cast<std::size_t>(x_.cols()));
    for (Eigen::Index j = 0; j < x_.cols(); ++j) names_.push_back(fmt::format("x{}", j + 1));
  }
  if (names_.size() != static_cast<std::size_t>(x_.cols()))
    fail(ErrorKind::ShapeMismatch, "column name count does not match covariate count");
  for (Eigen::Index j = 0; j < x_.cols(); ++j) {
    const auto col = x_.col(j);
    if (!col.allFinite()) fail(ErrorKind::InvalidArgument, fmt::format("column {} has non-finite values", names_[j]));
    if (col.maxCoeff() == col.minCoeff()) fail(ErrorKind::ConstantColumn, names_[j]);
  }
  if (truth_) {
    for (auto j : truth_->active_set)
      if (j >= p()) fail(ErrorKind::OutOfRange, fmt::format("active feature {} exceeds p={}", j + 1, p()));
    if (truth_->h_values.size() != y_.size() || !truth_->h_values.allFinite())
      fail(ErrorKind::InvalidArgument, "ground-truth h values must be finite with one entry per row");
  }
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    cells.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return cells;
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& path, const std::string& response_column) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::MissingFile, path.string());

  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::TooFewRows, "file is empty");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
  const auto header = split_commas(line);
  std::vector<std::string> names(header.begin(), header.end());

  const auto response_it = std::find(names.begin(), names.end(), response_column);
  if (response_it == names.end()) fail(ErrorKind::MissingColumn, response_column);
  const auto response_idx = static_cast<std::size_t>(response_it - names.begin());

  std::vector<std::vector<double>> rows;
  std::size_t row_no = 0;
  while (std::getline(in, line)) {
    ++row_no;
    if (trim(line).empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != names.size())
      fail(ErrorKind::NonNumericCell,
           fmt::format("row {} has {} cells, header has {}", row_no, cells.size(), names.size()));
    std::vector<double> values(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto cell = cells[c];
      const auto* end = cell.data() + cell.size();
      auto [ptr, ec] = std::from_chars(cell.data(), end, values[c]);
      if (cell.empty() || ec != std::errc() || ptr != end || !std::isfinite(values[c]))
        fail(ErrorKind::NonNumericCell, fmt::format("row {}, column {}: '{}'", row_no, names[c], cell));
    }
    rows.push_back(std::move(values));
  }
  if (rows.size() < 2) fail(ErrorKind::TooFewRows, fmt::format("{} data rows", rows.size()));
  if (names.size() < 2) fail(ErrorKind::MissingColumn, "no covariate columns besides the response");

  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto p = static_cast<Eigen::Index>(names.size() - 1);
  Vector y(n);
  Matrix x(n, p);
  std::vector<std::string> covariate_names;
  for (std::size_t c = 0; c < names.size(); ++c)
    if (c != response_idx) covariate_names.push_back(names[c]);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index col = 0;
    for (std::size_t c = 0; c < names.size(); ++c) {
      if (c == response_idx)
        y(i) = rows[static_cast<std::size_t>(i)][c];
      else
        x(i, col++) = rows[static_cast<std::size_t>(i)][c];
    }
  }
  return Dataset(std::move(y), std::move(x), std::nullopt, std::move(covariate_names));
}

PartitionPlan partition_features(std::size_t p, std::size_t m, std::uint64_t seed) {
  if (p == 0) fail(ErrorKind::InvalidArgument, "p must be at least 1");
  if (m == 0) fail(ErrorKind::InvalidArgument, "m must be at least 1");

  std::vector<std::size_t> order(p);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = p - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);

  PartitionPlan plan;
  plan.m = m;
  plan.assignment.resize(p);
  plan.sizes.resize(m);
  plan.members.resize(m);
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < m; ++i) {
    plan.sizes[i] = p / m + (i < p % m ? 1 : 0);
    for (std::size_t k = 0; k < plan.sizes[i]; ++k) {
      const auto j = order[cursor++];
      plan.assignment[j] = Slot{i, k};
      plan.members[i].push_back(j);
    }
  }
  return plan;
}

std::size_t zeta_inverse(const PartitionPlan& plan, std::size_t machine, std::size_t local) {
  if (machine >= plan.m || local >= plan.members[machine].size())
    fail(ErrorKind::OutOfRange, fmt::format("slot (machine {}, local {}) not in plan", machine + 1, local + 1));
  return plan.members[machine][local];
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::MissingFile, fmt::format("cannot write {}", tmp.string()));
    out << content;
    if (!out) fail(ErrorKind::MissingFile, fmt::format("short write to {}", tmp.string()));
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace ddac
