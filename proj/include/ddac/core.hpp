#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ddac {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Seeded generator with platform-independent draws. std distributions are
/// implementation-defined, so the few we need are spelled out here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t bits() { return engine_(); }
  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer on [0, bound).
  std::uint64_t below(std::uint64_t bound);
  double normal();

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

/// Derives independent child seeds from a parent seed (splitmix64 step).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// One additive term a * g(x_j) of a known generating model.
struct AdditiveTerm {
  std::size_t feature = 0;  // 0-based
  std::string label;
  std::function<double(double)> eval;
};

struct GroundTruth {
  std::vector<std::size_t> active_set;  // sorted, 0-based
  Vector h_values;                      // h(x_i) on the training rows
  double sigma = 1.0;
  std::vector<AdditiveTerm> terms;

  /// f_j(x); zero for inactive features.
  double component(std::size_t j, double x) const;
  /// h(x) for one covariate row.
  double h_at(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;
  Vector h(const Matrix& x) const;
};

class Dataset {
 public:
  /// Validates finiteness, shapes, and positive column variance.
  Dataset(Vector y, Matrix x, std::optional<GroundTruth> truth = std::nullopt,
          std::vector<std::string> names = {});

  std::size_t n() const { return static_cast<std::size_t>(y_.size()); }
  std::size_t p() const { return static_cast<std::size_t>(x_.cols()); }
  const Vector& y() const { return y_; }
  const Matrix& x() const { return x_; }
  const std::optional<GroundTruth>& truth() const { return truth_; }
  /// Column names; defaults to x1..xp.
  const std::vector<std::string>& names() const { return names_; }

 private:
  Vector y_;
  Matrix x_;
  std::optional<GroundTruth> truth_;
  std::vector<std::string> names_;
};

/// Reads a comma-separated file with a header row. All non-response columns
/// become covariates in file order.
Dataset load_dataset(const std::filesystem::path& path, const std::string& response_column);

struct Slot {
  std::size_t machine = 0;  // 0-based
  std::size_t local = 0;    // 0-based

  friend bool operator==(const Slot&, const Slot&) = default;
};

/// The bijection zeta between global feature indices and (machine, local) slots.
struct PartitionPlan {
  std::size_t m = 1;
  std::vector<Slot> assignment;                  // indexed by global feature
  std::vector<std::size_t> sizes;                // p_i per machine
  std::vector<std::vector<std::size_t>> members;  // global indices in local order

  std::size_t p() const { return assignment.size(); }
  bool idle(std::size_t machine) const { return sizes.at(machine) == 0; }

  friend bool operator==(const PartitionPlan&, const PartitionPlan&) = default;
};

/// Uniform random permutation of the p features cut into m contiguous chunks
/// whose sizes differ by at most one. Surplus machines (m > p) stay idle.
PartitionPlan partition_features(std::size_t p, std::size_t m, std::uint64_t seed);

/// Global feature index held at (machine, local) in the plan.
std::size_t zeta_inverse(const PartitionPlan& plan, std::size_t machine, std::size_t local);

/// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace ddac
