#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ddac/core.hpp"
#include "ddac/runtime.hpp"
#include "ddac/synthgen.hpp"

namespace ddac::metrics {

struct Confusion {
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tp = 0;
};

/// Counts |s_hat \ s_true|, |s_true \ s_hat| and the overlap. Duplicates are ignored.
Confusion confusion(std::vector<std::size_t> s_hat, std::vector<std::size_t> s_true);

/// Mean of (h_hat - h)^2 over the rows of test_points.
double mse_h(const runtime::FitResult& fit, const GroundTruth& truth, const Matrix& test_points);

struct RunMetrics {
  std::size_t fp = 0;
  std::size_t fn = 0;
  double mse = 0.0;        // fresh test sample of size n
  double mse_train = 0.0;  // training rows
  double seconds = 0.0;
  std::vector<runtime::PhaseTime> timings;
};

struct Summary {
  double mean = 0.0;
  std::optional<double> sd;  // empty with a single run
};
/// Arithmetic mean and sample sd (divisor R - 1).
Summary summarize(const std::vector<double>& values);

struct StudyCell {
  std::string scenario;
  runtime::Mode method = runtime::Mode::Ddac;
  std::size_t m = 1;
  std::vector<RunMetrics> runs;  // successful repetitions, in order
  std::size_t failures = 0;
  std::vector<std::string> failure_messages;

  Summary fp() const;
  Summary fn() const;
  Summary mse() const;
  Summary mse_train() const;
  Summary seconds() const;
};

struct StudyTable {
  std::vector<StudyCell> rows;

  const StudyCell* find(const std::string& scenario, runtime::Mode method, std::size_t m) const;
  /// Aligned plain text, one line per cell, "mean (sd)" columns.
  std::string to_text() const;
  /// scenario,method,m,metric,mean,sd,runs,failures
  std::string to_records() const;
};

struct StudyConfig {
  std::vector<synthgen::ScenarioSpec> scenarios;
  std::vector<runtime::Mode> methods{runtime::Mode::Ddac, runtime::Mode::Dac, runtime::Mode::Spam, runtime::Mode::Oracle};
  std::vector<std::size_t> m_values{5};
  std::size_t reps = 1;
  std::uint64_t seed = 0;
  double r = 1.0;
  std::optional<std::size_t> dn;
  std::size_t path_length = 500;
  grouplasso::CvRule cv_rule = grouplasso::CvRule::OneSe;
};

/// Every (scenario, m, method) cell over `reps` repetitions. Repetition k of a
/// scenario uses the same data for every method and m. Failed runs are counted,
/// not dropped silently.
StudyTable run_study(const StudyConfig& config);

struct TestingPoint {
  double a = 0.0;
  double type1 = 0.0;  // over null features
  double power = 0.0;  // over active features; equals the type-I rate at a = 0
  std::size_t runs = 0;
  std::size_t failures = 0;
  std::size_t null_tests = 0;
  std::size_t active_tests = 0;
  std::vector<double> null_statistics;  // every null-feature statistic, for calibration checks
};

struct TestingConfig {
  std::vector<double> a_grid{0.0, 0.1, 0.3, 0.5, 0.6, 1.0};
  std::size_t reps = 100;
  std::uint64_t seed = 0;
  double alpha = 0.05;
  std::size_t n = 300;
  std::size_t p = 500;
  std::size_t m = 10;
  double r = 1.0;
  std::vector<std::size_t> null_features{4, 5, 6, 7, 8, 9, 10, 11, 12, 13};  // 0-based
  std::vector<std::size_t> active_features{0, 1, 2, 3};
  std::size_t path_length = 500;
  grouplasso::CvRule cv_rule = grouplasso::CvRule::OneSe;
};

/// Type-I error and power of the chi-squared test on the Fig3 fixture across
/// the a grid. Run k uses the same covariates and noise at every a.
std::vector<TestingPoint> testing_study(const TestingConfig& config);

std::string testing_to_text(const std::vector<TestingPoint>& points);
/// a,type1,power,runs,failures
std::string testing_to_records(const std::vector<TestingPoint>& points);

}  // namespace ddac::metrics
