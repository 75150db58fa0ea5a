// Acceptance suite: one PASS/FAIL line per criterion. Usage: ddac_acceptance [criterion ...]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "../unit/oracles.hpp"
#include "ddac/decorrelate.hpp"
#include "ddac/grouplasso.hpp"
#include "ddac/inference.hpp"
#include "ddac/metrics.hpp"
#include "ddac/runtime.hpp"
#include "ddac/spline.hpp"
#include "ddac/synthgen.hpp"
#include "ddac/transport.hpp"

using namespace ddac;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double limit_s;
  std::function<Outcome()> run;
};

Matrix gaussian(Eigen::Index r, Eigen::Index c, std::mt19937_64& gen) {
  std::normal_distribution<double> d;
  Matrix out(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) out(i, j) = d(gen);
  return out;
}

Outcome decorrelation_identity() {
  std::mt19937_64 gen(1);
  std::uniform_int_distribution<int> size(2, 100), rank(0, 150);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const int n = size(gen);
    const Matrix psi = gaussian(n, rank(gen), gen);
    const Matrix g = psi * psi.transpose();
    const auto op = decorrelate::compute_f(g, 1.0);
    const Matrix check = op.f * (g + Matrix::Identity(n, n)) * op.f - Matrix::Identity(n, n);
    worst = std::max(worst, check.cwiseAbs().maxCoeff());
  }
  return {worst <= 1e-8, fmt::format("max |F(G+rI)F - I| = {:.2e} over 50 Grams (tol 1e-8)", worst)};
}

Outcome solver_oracle() {
  std::mt19937_64 gen(2);
  std::uniform_int_distribution<int> rows(10, 40), groups(1, 6), width(1, 3), pick(25, 475);
  double worst_gap = -1e300, worst_kkt = 0.0;
  for (int t = 0; t < 50; ++t) {
    const int n = rows(gen), p = groups(gen), dn = width(gen);
    const Matrix psi = gaussian(n, p * dn, gen);
    Vector beta = Vector::Zero(p * dn);
    beta.head(dn) = gaussian(dn, 1, gen);
    const Vector y = psi * beta + 0.5 * gaussian(n, 1, gen);
    const std::vector<Eigen::Index> widths(static_cast<std::size_t>(p), dn);
    const auto blocks = grouplasso::qr_blocks(psi, widths);
    const auto path = grouplasso::lambda_path(y, blocks);
    const double lambda = path.values[static_cast<std::size_t>(pick(gen))];
    const auto fit = grouplasso::backfit(y, blocks, lambda);
    const Vector ref = oracle::group_lasso_prox(blocks.q, y, std::vector<int>(static_cast<std::size_t>(p), dn), lambda);
    const double gap = grouplasso::objective(y, blocks, fit.theta, lambda) - grouplasso::objective(y, blocks, ref, lambda);
    worst_gap = std::max(worst_gap, gap);
    worst_kkt = std::max(worst_kkt, grouplasso::kkt_residual(y, blocks, fit.theta, lambda));
  }
  return {worst_gap <= 1e-7 && worst_kkt <= 1e-6,
          fmt::format("max objective gap {:.2e} (tol 1e-7), max KKT residual {:.2e} (tol 1e-6)", worst_gap, worst_kkt)};
}

Outcome quasi_correlation_trend() {
  bool ok = true;
  std::string detail;
  for (double rho : {0.3, 0.6, 0.9}) {
    std::vector<double> before, after;
    for (std::uint64_t s = 0; s < 10; ++s) {
      const auto r = decorrelate::quasi_correlation_study(200, 400, rho, 5, derive_seed(3, s), 2000);
      before.insert(before.end(), r.before.begin(), r.before.end());
      after.insert(after.end(), r.after.begin(), r.after.end());
    }
    const double b = decorrelate::summarize(before).median_abs;
    const double a = decorrelate::summarize(after).median_abs;
    ok = ok && a < 0.05;
    if (rho == 0.6) ok = ok && b > 0.15;
    detail += fmt::format("rho={}: before {:.3f} after {:.4f}; ", rho, b, a);
  }
  return {ok, detail + "(after < 0.05 everywhere, before > 0.15 at rho=0.6)"};
}

synthgen::ScenarioSpec desk(synthgen::Scenario s, std::size_t n, std::size_t p) {
  synthgen::ScenarioSpec spec;
  spec.scenario = s;
  spec.n = n;
  spec.p = p;
  return spec;
}

metrics::StudyTable study(const synthgen::ScenarioSpec& spec, std::vector<runtime::Mode> methods,
                          std::vector<std::size_t> ms, std::size_t reps, std::uint64_t seed) {
  metrics::StudyConfig config;
  config.scenarios = {spec};
  config.methods = std::move(methods);
  config.m_values = std::move(ms);
  config.reps = reps;
  config.seed = seed;
  return metrics::run_study(config);
}

Outcome decorrelation_benefit() {
  const auto table = study(desk(synthgen::Scenario::Example4, 300, 1000), {runtime::Mode::Ddac, runtime::Mode::Dac},
                           {10}, 20, 4);
  const auto* ddac = table.find("ex4", runtime::Mode::Ddac, 10);
  const auto* dac = table.find("ex4", runtime::Mode::Dac, 10);
  const double fp_ddac = ddac->fp().mean, fp_dac = dac->fp().mean, fn_ddac = ddac->fn().mean;
  const bool ok = ddac->failures == 0 && dac->failures == 0 && fp_ddac < fp_dac / 5.0 && fn_ddac <= 0.5;
  return {ok, fmt::format("FP ddac {:.2f} vs dac {:.2f} (need < dac/5 = {:.2f}), FN ddac {:.2f} (need <= 0.5), failures {}/{}",
                          fp_ddac, fp_dac, fp_dac / 5.0, fn_ddac, ddac->failures, dac->failures)};
}

Outcome sparsistency() {
  bool ok = true;
  std::string detail;
  for (auto [scenario, name] : {std::pair{synthgen::Scenario::Example1, "ex1"}, std::pair{synthgen::Scenario::Example2, "ex2"}}) {
    const auto table = study(desk(scenario, 500, 200), {runtime::Mode::Ddac}, {5}, 20, 5);
    const auto* cell = table.find(name, runtime::Mode::Ddac, 5);
    std::size_t covered = 0;
    for (const auto& r : cell->runs) covered += r.fn == 0;
    const double share = static_cast<double>(covered) / 20.0;
    const double fp = cell->fp().mean;
    ok = ok && cell->failures == 0 && share >= 0.9 && fp <= 2.0;
    detail += fmt::format("{}: S in S_hat {}/20, mean FP {:.2f}; ", name, covered, fp);
  }
  return {ok, detail + "(need >= 90% and FP <= 2)"};
}

Outcome stability_in_m() {
  const auto spec = desk(synthgen::Scenario::Example4, 300, 1000);
  const std::size_t reps = 10;
  const auto ddac = study(spec, {runtime::Mode::Ddac}, {1, 5, 10, 20}, reps, 6);
  const auto dac = study(spec, {runtime::Mode::Dac}, {1, 10}, reps, 6);
  double lo = 1e300, hi = -1e300;
  std::string detail = "ddac FP by m:";
  std::size_t failures = 0;
  for (std::size_t m : {1, 5, 10, 20}) {
    const auto* cell = ddac.find("ex4", runtime::Mode::Ddac, m);
    failures += cell->failures;
    lo = std::min(lo, cell->fp().mean);
    hi = std::max(hi, cell->fp().mean);
    detail += fmt::format(" {}:{:.1f}", m, cell->fp().mean);
  }
  const auto* d1 = dac.find("ex4", runtime::Mode::Dac, 1);
  const auto* d10 = dac.find("ex4", runtime::Mode::Dac, 10);
  failures += d1->failures + d10->failures;
  const double growth = d10->fp().mean - d1->fp().mean;
  const bool ok = failures == 0 && hi - lo <= 3.0 && growth >= 5.0;
  return {ok, detail + fmt::format(" (spread {:.1f}, need <= 3); dac FP m=1 {:.1f}, m=10 {:.1f} (growth {:.1f}, need >= 5); {} reps",
                                   hi - lo, d1->fp().mean, d10->fp().mean, growth, reps)};
}

metrics::TestingConfig testing_config(std::vector<double> grid) {
  metrics::TestingConfig config;
  config.a_grid = std::move(grid);
  config.reps = 100;
  config.seed = 7;
  return config;
}

Outcome type_one_control() {
  const auto points = metrics::testing_study(testing_config({0.0, 0.5}));
  bool ok = true;
  std::string detail;
  for (const auto& pt : points) {
    ok = ok && pt.type1 <= 0.07 && pt.failures == 0;
    detail += fmt::format("a={}: type-I {:.4f} over {} tests ({} failed runs); ", pt.a, pt.type1, pt.null_tests, pt.failures);
  }
  return {ok, detail + "(need <= 0.07)"};
}

Outcome power_curve() {
  const auto points = metrics::testing_study(testing_config({0.1, 0.3, 0.6, 1.0}));
  bool ok = points.back().power >= 0.85;
  std::string detail;
  for (std::size_t k = 0; k < points.size(); ++k) {
    if (k > 0) ok = ok && points[k].power >= points[k - 1].power - 0.05;
    ok = ok && points[k].failures == 0;
    detail += fmt::format("a={}: {:.3f}; ", points[k].a, points[k].power);
  }
  return {ok, "power " + detail + "(nondecreasing within 0.05, >= 0.85 at a=1)"};
}

Outcome null_calibration() {
  std::vector<double> stats;
  std::size_t dof = 0, failures = 0;
  for (std::uint64_t s = 0; s < 500; ++s) {
    auto spec = desk(synthgen::Scenario::Null, 200, 200);
    spec.seed = derive_seed(9, s);
    const auto data = synthgen::gen_example(spec);
    runtime::RunOptions o;
    o.m = 4;
    o.seed = derive_seed(90, s);
    try {
      runtime::Session session(data, o);
      const auto rep = session.test(0, 0.05);
      stats.push_back(rep.statistic);
      dof = rep.dof;
    } catch (const Error&) {
      ++failures;
    }
  }
  const double d = oracle::ks_statistic(stats, [dof](double x) { return inference::chi2_cdf(x, static_cast<double>(dof)); });
  const double pval = oracle::ks_pvalue(d, stats.size());
  return {failures == 0 && pval > 0.01,
          fmt::format("KS D = {:.4f}, p = {:.4f} vs chi2({}) over {} statistics, {} failed (need p > 0.01)", d, pval, dof,
                      stats.size(), failures)};
}

Outcome chi_squared_utilities() {
  double worst = 0.0;
  for (int dof = 1; dof <= 30; ++dof)
    for (double prob = 0.001; prob < 1.0; prob += 0.0125) {
      const double q = inference::chi2_quantile(dof, prob);
      worst = std::max(worst, std::abs(inference::chi2_cdf(q, dof) - prob));
      const double x = 0.05 + prob * 3.0 * dof;
      worst = std::max(worst, std::abs(inference::chi2_quantile(dof, inference::chi2_cdf(x, dof)) - x) / std::max(1.0, x));
    }
  double closed = 0.0;
  for (double alpha : {0.5, 0.1, 0.05, 0.01, 0.001})
    closed = std::max(closed, std::abs(inference::chi2_quantile(2, 1 - alpha) + 2.0 * std::log(alpha)));
  return {worst <= 1e-8 && closed <= 1e-10,
          fmt::format("max inverse error {:.2e} (tol 1e-8), dof=2 closed-form error {:.2e} (tol 1e-10)", worst, closed)};
}

std::uint16_t open_ports(int count) {
  for (int base = 41000; base < 60000; base += 97) {
    try {
      for (int i = 0; i < count; ++i) transport::Listener probe(static_cast<std::uint16_t>(base + i));
      return static_cast<std::uint16_t>(base);
    } catch (const Error&) {
    }
  }
  return 0;
}

Outcome transport_identity() {
  auto spec = desk(synthgen::Scenario::Example1, 150, 12);
  spec.seed = 11;
  const auto data = synthgen::gen_example(spec);
  runtime::RunOptions o;
  o.m = 3;
  o.seed = 11;
  const auto a = runtime::run_ddac_spam(data, o);
  const auto b = runtime::run_ddac_spam(data, o);
  auto s = o;
  s.transport = runtime::TransportKind::Socket;
  s.spawn_workers = true;
  s.port = open_ports(3);
  const auto c = runtime::run_ddac_spam(data, s);
  const bool same_seed = runtime::identical(a, b), cross = runtime::identical(a, c);
  return {same_seed && cross, fmt::format("repeat in_process identical: {}, socket identical: {}", same_seed, cross)};
}

Outcome dn_formula() {
  const auto a = spline::compute_dn(500), b = spline::compute_dn(172);
  return {a == 5 && b == 3, fmt::format("compute_dn(500) = {}, compute_dn(172) = {}", a, b)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "decorrelation correctness", 5, decorrelation_identity},
      {2, "solver-oracle equivalence", 30, solver_oracle},
      {3, "quasi-correlation trend", 300, quasi_correlation_trend},
      {4, "decorrelation benefit", 1200, decorrelation_benefit},
      {5, "sparsistency under independence", 900, sparsistency},
      {6, "stability in m", 1800, stability_in_m},
      {7, "type-I control", 2400, type_one_control},
      {8, "power monotonicity", 2400, power_curve},
      {9, "null calibration", 1200, null_calibration},
      {10, "chi-squared utilities", 1, chi_squared_utilities},
      {11, "determinism and transport independence", 60, transport_identity},
      {12, "d_n formula", 1, dn_formula},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, fmt::format("exception: {}", e.what())};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs <= c.limit_s;
    const bool pass = out.pass && in_time;
    failed += !pass;
    std::printf("[%s] %2d %s: %s | %.1f s (limit %.0f s%s)\n", pass ? "PASS" : "FAIL", c.id, c.name.c_str(),
                out.detail.c_str(), secs, c.limit_s, in_time ? "" : ", exceeded");
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
