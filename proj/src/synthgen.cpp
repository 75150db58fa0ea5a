#include "ddac/synthgen.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include <fmt/format.h>

#include "ddac/errors.hpp"

namespace ddac::synthgen {

double g1(double x) { return x; }
double g2(double x) { return x * x - 25.0 / 12.0; }
double g3(double x, double omega) { return std::sin(omega * x); }
double g4(double x) { return std::exp(-x) - 0.4 * std::sinh(2.5); }
double g5(double x) { return (x - 1.0) * (x - 1.0); }
double g6(double x, double omega) {
  const double s = std::sin(omega * x);
  return s / (2.0 - s);
}
double g7(double x, double omega) {
  const double s = std::sin(omega * x);
  const double c = std::cos(omega * x);
  return 0.1 * s + 0.2 * c + 0.3 * s * s + 0.4 * c * c * c + 0.5 * s * s * s;
}

std::vector<ComponentFunction> component_functions() {
  return {
      {"g1", [](double x, double) { return g1(x); }},
      {"g2", [](double x, double) { return g2(x); }},
      {"g3", [](double x, double w) { return g3(x, w); }},
      {"g4", [](double x, double) { return g4(x); }},
      {"g5", [](double x, double) { return g5(x); }},
      {"g6", [](double x, double w) { return g6(x, w); }},
      {"g7", [](double x, double w) { return g7(x, w); }},
  };
}

std::string scenario_name(Scenario scenario) {
  switch (scenario) {
    case Scenario::Example1: return "ex1";
    case Scenario::Example2: return "ex2";
    case Scenario::Example3: return "ex3";
    case Scenario::Example4: return "ex4";
    case Scenario::Example5: return "ex5";
    case Scenario::Fig3: return "fig3";
    case Scenario::Null: return "null";
  }
  return "unknown";
}

Scenario parse_scenario_name(const std::string& name) {
  for (auto s : {Scenario::Example1, Scenario::Example2, Scenario::Example3, Scenario::Example4, Scenario::Example5,
                 Scenario::Fig3, Scenario::Null})
    if (scenario_name(s) == name) return s;
  fail(ErrorKind::InvalidScenario, fmt::format("unknown scenario '{}'", name));
}

double ScenarioSpec::dependence_or_default() const {
  if (dependence) return *dependence;
  return scenario == Scenario::Example5 ? 0.5 : 1.5;
}

namespace {

void validate(const ScenarioSpec& spec) {
  if (spec.n < 2) fail(ErrorKind::InvalidScenario, "n must be at least 2");
  const std::size_t min_p = (spec.scenario == Scenario::Null) ? 1 : 4;
  if (spec.p < min_p) fail(ErrorKind::InvalidScenario, fmt::format("p must be at least {}", min_p));
  const double dep = spec.dependence_or_default();
  if (spec.scenario == Scenario::Example5 && !(dep >= 0.0 && dep < 1.0))
    fail(ErrorKind::InvalidScenario, "rho must lie in [0, 1)");
  if ((spec.scenario == Scenario::Example3 || spec.scenario == Scenario::Example4 || spec.scenario == Scenario::Fig3) &&
      !(dep >= 0.0))
    fail(ErrorKind::InvalidScenario, "t must be nonnegative");
  if (spec.scenario == Scenario::Fig3 && !(spec.a >= 0.0)) fail(ErrorKind::InvalidScenario, "a must be nonnegative");
}

}  // namespace

ScenarioSpec parse_scenario(const std::string& text) {
  ScenarioSpec spec;
  std::istringstream in(text);
  std::string token;
  bool have_scenario = false;
  while (in >> token) {
    if (token.starts_with('#')) {
      std::string rest;
      std::getline(in, rest);
      continue;
    }
    const auto eq = token.find('=');
    if (eq == std::string::npos) fail(ErrorKind::InvalidScenario, fmt::format("expected key=value, got '{}'", token));
    const auto key = token.substr(0, eq);
    const auto value = token.substr(eq + 1);
    try {
      if (key == "scenario") {
        spec.scenario = parse_scenario_name(value);
        have_scenario = true;
      } else if (key == "n") {
        spec.n = std::stoul(value);
      } else if (key == "p") {
        spec.p = std::stoul(value);
      } else if (key == "seed") {
        spec.seed = std::stoull(value);
      } else if (key == "t" || key == "rho") {
        spec.dependence = std::stod(value);
      } else if (key == "a") {
        spec.a = std::stod(value);
      } else {
        fail(ErrorKind::InvalidScenario, fmt::format("unknown key '{}'", key));
      }
    } catch (const std::logic_error&) {
      fail(ErrorKind::InvalidScenario, fmt::format("bad value for '{}': '{}'", key, value));
    }
  }
  if (!have_scenario) fail(ErrorKind::InvalidScenario, "missing scenario=");
  validate(spec);
  return spec;
}

std::string to_config(const ScenarioSpec& spec) {
  std::string out = fmt::format("scenario={}\nn={}\np={}\nseed={}\n", scenario_name(spec.scenario), spec.n, spec.p,
                                spec.seed);
  switch (spec.scenario) {
    case Scenario::Example3:
    case Scenario::Example4: out += fmt::format("t={}\n", spec.dependence_or_default()); break;
    case Scenario::Example5: out += fmt::format("rho={}\n", spec.dependence_or_default()); break;
    case Scenario::Fig3: out += fmt::format("t={}\na={}\n", spec.dependence_or_default(), spec.a); break;
    default: break;
  }
  return out;
}

Matrix equicorrelated_normal(std::size_t n, std::size_t p, double rho, Rng& rng) {
  if (!(rho >= 0.0 && rho < 1.0)) fail(ErrorKind::InvalidArgument, "rho must lie in [0, 1)");
  const auto rows = static_cast<Eigen::Index>(n);
  const auto cols = static_cast<Eigen::Index>(p);
  Vector shared(rows);
  for (Eigen::Index i = 0; i < rows; ++i) shared(i) = rng.normal();
  Matrix x(rows, cols);
  const double a = std::sqrt(rho);
  const double b = std::sqrt(1.0 - rho);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) x(i, j) = a * shared(i) + b * rng.normal();
  return x;
}

Matrix gen_covariates(const ScenarioSpec& spec, std::size_t n, Rng& rng) {
  validate(spec);
  const auto rows = static_cast<Eigen::Index>(n);
  const auto cols = static_cast<Eigen::Index>(spec.p);
  Matrix x(rows, cols);
  switch (spec.scenario) {
    case Scenario::Example1:
    case Scenario::Null:
      for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) x(i, j) = rng.uniform(-2.5, 2.5);
      break;
    case Scenario::Example2:
      for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) x(i, j) = rng.normal();
      break;
    case Scenario::Example3:
    case Scenario::Example4:
    case Scenario::Fig3: {
      const double t = spec.dependence_or_default();
      // Example 4 shares one U across all features; otherwise one U per segment of 20.
      const Eigen::Index segments = spec.scenario == Scenario::Example4 ? 1 : (cols + 19) / 20;
      Matrix u(rows, segments);
      for (Eigen::Index s = 0; s < segments; ++s)
        for (Eigen::Index i = 0; i < rows; ++i) u(i, s) = rng.uniform();
      for (Eigen::Index j = 0; j < cols; ++j) {
        const Eigen::Index s = spec.scenario == Scenario::Example4 ? 0 : j / 20;
        for (Eigen::Index i = 0; i < rows; ++i) x(i, j) = (rng.uniform() + t * u(i, s)) / (1.0 + t);
      }
      break;
    }
    case Scenario::Example5: x = equicorrelated_normal(n, spec.p, spec.dependence_or_default(), rng); break;
  }
  return x;
}

namespace {

AdditiveTerm term(std::size_t feature, double coef, std::string name, std::function<double(double)> g) {
  return AdditiveTerm{feature, fmt::format("{}*{}(x{})", coef, name, feature + 1),
                      [coef, g = std::move(g)](double x) { return coef * g(x); }};
}

struct Model {
  std::vector<AdditiveTerm> terms;
  double sigma = 1.0;
};

Model model_for(const ScenarioSpec& spec) {
  using std::numbers::pi;
  switch (spec.scenario) {
    case Scenario::Example1:
      return {{term(0, 2.0, "g1", g1), term(1, 1.6, "g2", g2), term(2, -4.0, "g3", [](double x) { return g3(x, 2.0); }),
               term(3, 1.0, "g4", g4)},
              1.5};
    case Scenario::Example2:
      return {{term(0, 5.0, "g1", g1), term(1, 2.1, "g5", g5),
               term(2, 13.2, "g6", [](double x) { return g6(x, pi / 4); }),
               term(3, 17.2, "g7", [](double x) { return g7(x, pi / 4); })},
              2.56};
    case Scenario::Example3:
    case Scenario::Example4:
      return {{term(0, 2.5, "g1", g1), term(1, 2.6, "g5", g5), term(2, 1.0, "g6", [](double x) { return g6(x, 2 * pi); }),
               term(3, 1.0, "g7", [](double x) { return g7(x, 2 * pi); })},
              0.3};
    case Scenario::Example5:
      return {{term(0, 2.5, "g1", g1), term(1, 1.0, "g5", g5),
               term(2, 6.5, "g6", [](double x) { return g6(x, pi / 4); }),
               term(3, 8.5, "g7", [](double x) { return g7(x, pi / 4); })},
              1.2};
    case Scenario::Fig3: {
      if (spec.a == 0.0) return {{}, 0.5};
      const double a = spec.a;
      return {{term(0, a * 2.5, "g1", g1), term(1, a * 2.6, "g5", g5),
               term(2, a, "g6", [](double x) { return g6(x, 2 * pi); }),
               term(3, a, "g7", [](double x) { return g7(x, 2 * pi); })},
              0.5};
    }
    case Scenario::Null: return {{}, 1.0};
  }
  return {};
}

}  // namespace

Dataset gen_example(const ScenarioSpec& spec) {
  validate(spec);
  Rng rng(spec.seed);
  Matrix x = gen_covariates(spec, spec.n, rng);
  auto model = model_for(spec);

  GroundTruth truth;
  truth.sigma = model.sigma;
  truth.terms = std::move(model.terms);
  for (const auto& t : truth.terms) truth.active_set.push_back(t.feature);
  truth.h_values = truth.h(x);

  Vector y(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) y(i) = truth.h_values(i) + truth.sigma * rng.normal();
  return Dataset(std::move(y), std::move(x), std::move(truth));
}

Dataset gen_fig3(double a, std::size_t n, std::size_t p, std::uint64_t seed) {
  ScenarioSpec spec;
  spec.scenario = Scenario::Fig3;
  spec.a = a;
  spec.n = n;
  spec.p = p;
  spec.seed = seed;
  return gen_example(spec);
}

Matrix gen_test_points(const ScenarioSpec& spec, std::size_t n_test, std::uint64_t seed) {
  Rng rng(seed);
  return gen_covariates(spec, n_test, rng);
}

double snr(const Dataset& data) {
  if (!data.truth()) fail(ErrorKind::NoGroundTruth, "snr needs ground truth");
  const auto& h = data.truth()->h_values;
  const double mean = h.mean();
  const double var = (h.array() - mean).square().sum() / static_cast<double>(h.size() - 1);
  const double sigma = data.truth()->sigma;
  return var / (sigma * sigma);
}

void write_dataset_csv(const Dataset& data, const std::filesystem::path& path) {
  fmt::memory_buffer buf;
  fmt::format_to(std::back_inserter(buf), "y");
  for (const auto& name : data.names()) fmt::format_to(std::back_inserter(buf), ",{}", name);
  buf.push_back('\n');
  for (std::size_t i = 0; i < data.n(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    fmt::format_to(std::back_inserter(buf), "{}", data.y()(row));
    for (std::size_t j = 0; j < data.p(); ++j)
      fmt::format_to(std::back_inserter(buf), ",{}", data.x()(row, static_cast<Eigen::Index>(j)));
    buf.push_back('\n');
  }
  write_file_atomic(path, fmt::to_string(buf));
}

void write_truth_sidecar(const Dataset& data, const ScenarioSpec& spec, const std::filesystem::path& path) {
  if (!data.truth()) fail(ErrorKind::NoGroundTruth, "dataset has no ground truth");
  const auto& truth = *data.truth();
  std::string out = "# ground truth\n" + to_config(spec);
  out += fmt::format("sigma={}\n", truth.sigma);
  out += "active=";
  for (std::size_t k = 0; k < truth.active_set.size(); ++k)
    out += fmt::format("{}{}", k ? "," : "", truth.active_set[k] + 1);
  out += "\n";
  for (const auto& t : truth.terms) out += fmt::format("term={}\n", t.label);
  out += fmt::format("snr={}\n", snr(data));
  write_file_atomic(path, out);
}

}  // namespace ddac::synthgen
