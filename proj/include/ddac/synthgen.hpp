#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ddac/core.hpp"

namespace ddac::synthgen {

double g1(double x);
double g2(double x);
double g3(double x, double omega);
double g4(double x);
double g5(double x);
double g6(double x, double omega);
double g7(double x, double omega);

struct ComponentFunction {
  std::string name;
  std::function<double(double x, double omega)> eval;  // omega ignored by g1, g2, g4, g5
};

/// g1..g7 in order.
std::vector<ComponentFunction> component_functions();

enum class Scenario { Example1, Example2, Example3, Example4, Example5, Fig3, Null };

std::string scenario_name(Scenario scenario);
Scenario parse_scenario_name(const std::string& name);

struct ScenarioSpec {
  Scenario scenario = Scenario::Example1;
  std::size_t n = 500;
  std::size_t p = 200;
  std::uint64_t seed = 0;
  /// t for Examples 3/4 and Fig3 (default 1.5), rho for Example 5 (default 0.5).
  std::optional<double> dependence;
  /// Signal scale for the Fig3 fixture.
  double a = 1.0;

  double dependence_or_default() const;
};

/// Parses whitespace- or newline-separated key=value pairs:
/// scenario, n, p, seed, t, rho, a. Blank lines and '#' comments are ignored.
ScenarioSpec parse_scenario(const std::string& text);
std::string to_config(const ScenarioSpec& spec);

/// Covariates only, drawn from the scenario's design distribution.
Matrix gen_covariates(const ScenarioSpec& spec, std::size_t n, Rng& rng);

/// Covariates, response, and ground truth (active set {1,2,3,4} except for the
/// null models).
Dataset gen_example(const ScenarioSpec& spec);

/// Example-3 covariates with y = a * [2.5 g1 + 2.6 g5 + g6(., 2pi) + g7(., 2pi)] + 0.5 eps.
Dataset gen_fig3(double a, std::size_t n, std::size_t p, std::uint64_t seed);

/// Independent covariate rows for out-of-sample evaluation.
Matrix gen_test_points(const ScenarioSpec& spec, std::size_t n_test, std::uint64_t seed);

/// x_ij = sqrt(rho) z_i + sqrt(1 - rho) e_ij, 0 <= rho < 1.
Matrix equicorrelated_normal(std::size_t n, std::size_t p, double rho, Rng& rng);

/// var(h) / sigma^2 over the training rows.
double snr(const Dataset& data);

/// Writes "y,x1,...,xp" in the tabular format read by load_dataset.
void write_dataset_csv(const Dataset& data, const std::filesystem::path& path);
/// Ground-truth sidecar: scenario config, sigma, active set, term labels.
void write_truth_sidecar(const Dataset& data, const ScenarioSpec& spec, const std::filesystem::path& path);

}  // namespace ddac::synthgen
