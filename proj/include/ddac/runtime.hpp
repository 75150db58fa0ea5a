#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "ddac/core.hpp"
#include "ddac/errors.hpp"
#include "ddac/grouplasso.hpp"
#include "ddac/inference.hpp"
#include "ddac/spline.hpp"
#include "ddac/transport.hpp"
#include "ddac/wire.hpp"

namespace ddac::runtime {

// Ridge refinement ---------------------------------------------------------

struct RidgeFit {
  Vector beta;            // coefficients on the (already centered) columns
  double intercept = 0.0;  // mean of y
  double penalty = 0.0;
  std::vector<double> grid;
  std::vector<double> cv_errors;
};

/// argmin ||y - X b||^2 + penalty ||b||^2 through the thin SVD of X; at
/// penalty 0 this is the minimum-norm least-squares solution.
Vector ridge_solve(const Matrix& x, const Vector& y, double penalty);

/// `count` geometric points over [1e-4, 1e4] * mean squared column norm.
std::vector<double> ridge_grid(const Matrix& x, std::size_t count = 50);

/// K-fold CV over the grid (ties go to the larger penalty), then a full-data
/// fit. Empty `psi` gives the intercept-only fit. Raises OverSelected when
/// psi has more than 4n columns.
RidgeFit ridge_refine(const Vector& y, const Matrix& psi, std::size_t folds, std::uint64_t seed,
                      std::optional<std::vector<double>> grid = std::nullopt);

// Coordinator --------------------------------------------------------------

enum class Mode { Ddac, Dac, Spam, Oracle };
std::string to_string(Mode mode);
Mode parse_mode(const std::string& text);

enum class TransportKind { InProcess, Socket };
std::string to_string(TransportKind kind);
TransportKind parse_transport(const std::string& text);

struct RunOptions {
  std::size_t m = 1;
  double r = 1.0;
  std::uint64_t seed = 0;
  Mode mode = Mode::Ddac;
  std::size_t folds = 5;
  std::size_t path_length = 500;
  grouplasso::CvRule cv_rule = grouplasso::CvRule::OneSe;
  std::optional<std::size_t> dn;  // overrides compute_dn(n)
  TransportKind transport = TransportKind::InProcess;
  std::uint16_t port = 0;       // socket mode: worker i listens on port + i - 1
  bool spawn_workers = false;   // socket mode: host the workers in this process
  std::chrono::milliseconds timeout{600'000};
  std::vector<std::size_t> oracle_set;  // 0-based true active set for Mode::Oracle
};

struct PhaseTime {
  std::string phase;
  double seconds = 0.0;
};

/// One frame seen by the coordinator.
struct MessageRecord {
  wire::Kind kind = wire::Kind::Shutdown;
  std::uint32_t from = 0;
  std::uint32_t to = 0;
  std::uint64_t payload_bytes = 0;

  friend bool operator==(const MessageRecord&, const MessageRecord&) = default;
};

struct WorkerSummary {
  std::size_t machine = 0;  // 0-based
  std::vector<std::size_t> features;
  std::vector<std::size_t> selected;
  double lambda = 0.0;
  std::size_t iterations = 0;
  bool converged = true;
  double cv_error = 0.0;

  friend bool operator==(const WorkerSummary&, const WorkerSummary&) = default;
};

/// f_j(x) = encode_j(x) * coef, on the scale of the original response.
struct FeatureFit {
  std::size_t feature = 0;
  spline::FeatureEncoder encoder;
  Vector coef;

  Vector evaluate(const Eigen::Ref<const Vector>& x) const;
};

struct FitResult {
  Mode mode = Mode::Ddac;
  std::size_t n = 0, p = 0, m = 1, dn = 0;
  double r = 1.0;
  std::uint64_t seed = 0;
  PartitionPlan plan;
  std::vector<std::size_t> selected;  // sorted, 0-based
  Vector beta_hat;                    // blocks of the selected features, in order
  double intercept = 0.0;
  double y_mean = 0.0;
  double y_scale = 1.0;  // sample sd used to standardize y
  double ridge_penalty = 0.0;
  std::vector<FeatureFit> f_hat;
  std::vector<WorkerSummary> per_worker;
  Vector fitted_sum;  // sum of the workers' pre-refinement fits, standardized scale
  bool converged = true;
  std::vector<MessageRecord> messages;
  std::vector<PhaseTime> timings;

  Vector predict(const Matrix& x) const;
  double timing(const std::string& phase) const;
};

/// Field-for-field, bit-level equality; timings are ignored.
bool identical(const FitResult& a, const FitResult& b);

/// Raised when a worker reports an error, disconnects, or times out.
class WorkerFailure : public Error {
 public:
  WorkerFailure(std::size_t machine, const std::string& cause, std::vector<PhaseTime> partial);
  std::size_t machine() const { return machine_; }  // 0-based
  const std::vector<PhaseTime>& partial_timings() const { return partial_; }

 private:
  std::size_t machine_;
  std::vector<PhaseTime> partial_;
};

/// A fit that keeps its workers alive so features can be tested afterwards.
class Session {
 public:
  Session(const Dataset& data, const RunOptions& options);
  ~Session();
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  const FitResult& result() const;
  /// Debiased chi-squared test of H0: f_j = 0 (0-based j). Not available in oracle mode.
  inference::TestReport test(std::size_t feature, double alpha);
  std::vector<inference::TestReport> test(const std::vector<std::size_t>& features, double alpha);
  /// Sends Shutdown and joins local workers; also run by the destructor.
  void close();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Runs the whole pipeline and shuts the workers down.
FitResult run_ddac_spam(const Dataset& data, const RunOptions& options);

// Worker ---------------------------------------------------------------------

/// Serves one session on an established channel; returns after Shutdown.
/// Errors are reported to the coordinator as an Error message.
void run_worker(transport::Channel& channel, std::chrono::milliseconds timeout);

/// Listens on `port` and serves one session (or sessions until an idle
/// timeout when `persistent`). Raises BindFailure.
void serve_worker(std::uint16_t port, bool persistent, std::chrono::milliseconds timeout);

/// m workers on consecutive ports, each in its own thread, bound up front.
class LocalWorkerPool {
 public:
  LocalWorkerPool(std::size_t m, std::uint16_t base_port, std::chrono::milliseconds timeout);
  ~LocalWorkerPool();
  LocalWorkerPool(const LocalWorkerPool&) = delete;
  LocalWorkerPool& operator=(const LocalWorkerPool&) = delete;
  void join();

 private:
  std::vector<std::thread> threads_;
};

}  // namespace ddac::runtime
