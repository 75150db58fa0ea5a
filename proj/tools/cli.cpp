#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "ddac/core.hpp"
#include "ddac/decorrelate.hpp"
#include "ddac/errors.hpp"
#include "ddac/metrics.hpp"
#include "ddac/runtime.hpp"
#include "ddac/spline.hpp"
#include "ddac/synthgen.hpp"

namespace ddac::cli {
namespace {

namespace fs = std::filesystem;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument:
    case ErrorKind::MissingFile:
    case ErrorKind::MissingColumn:
    case ErrorKind::NonNumericCell:
    case ErrorKind::ConstantColumn:
    case ErrorKind::TooFewRows:
    case ErrorKind::OutOfRange:
    case ErrorKind::DegenerateColumn:
    case ErrorKind::ConstantBasisColumn:
    case ErrorKind::ShapeMismatch:
    case ErrorKind::NoGroundTruth:
    case ErrorKind::UnknownFeature:
    case ErrorKind::InvalidScenario:
    case ErrorKind::OverSelected:
      return kDataError;
    case ErrorKind::NotConverged:
      return kNotConverged;
    default:
      return kRuntimeError;
  }
}

// Shared by fit and infer.
struct FitFlags {
  std::string input;
  std::string response = "y";
  std::size_t m = 1;
  double r = 1.0;
  std::uint64_t seed = 0;
  std::string mode = "ddac";
  std::string transport = "in_process";
  std::uint16_t port = 47100;
  std::optional<std::size_t> dn;
  bool spawn_workers = false;
  double timeout_s = 600.0;
  std::string truth;
  std::string cv_rule = "1se";
};

void add_fit_flags(CLI::App& cmd, FitFlags& f) {
  cmd.add_option("--input", f.input, "CSV file with a header row")->required();
  cmd.add_option("--response", f.response, "response column name")->capture_default_str();
  cmd.add_option("--m", f.m, "number of machines")->capture_default_str()->check(CLI::PositiveNumber);
  cmd.add_option("--r", f.r, "ridge added to the aggregated Gram")->capture_default_str()->check(CLI::PositiveNumber);
  cmd.add_option("--seed", f.seed, "random seed")->capture_default_str();
  cmd.add_option("--mode", f.mode, "ddac | dac | spam | oracle")->capture_default_str();
  cmd.add_option("--transport", f.transport, "in_process | socket")->capture_default_str();
  cmd.add_option("--port", f.port, "socket mode: worker i listens on port + i - 1")->capture_default_str();
  cmd.add_option("--dn", f.dn, "basis functions per feature (default from n)");
  cmd.add_flag("--spawn-workers", f.spawn_workers, "socket mode: host the workers inside this process");
  cmd.add_option("--timeout", f.timeout_s, "seconds to wait for any worker reply")->capture_default_str();
  cmd.add_option("--truth", f.truth, "ground-truth sidecar for oracle mode (default: <input>.truth)");
  cmd.add_option("--cv-rule", f.cv_rule, "lambda choice: min | 1se")->capture_default_str();
}

std::vector<std::size_t> read_truth_active(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::NoGroundTruth, fmt::format("oracle mode needs a truth sidecar; {} not found", path.string()));
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("active=", 0) != 0) continue;
    std::vector<std::size_t> out;
    std::stringstream cells(line.substr(7));
    std::string cell;
    while (std::getline(cells, cell, ','))
      if (!cell.empty()) {
        const auto j = std::stoull(cell);
        if (j == 0) fail(ErrorKind::NoGroundTruth, "active features are 1-based");
        out.push_back(j - 1);
      }
    return out;
  }
  fail(ErrorKind::NoGroundTruth, fmt::format("{} has no active= line", path.string()));
}

runtime::RunOptions to_options(const FitFlags& f, const Dataset& data) {
  runtime::RunOptions o;
  o.m = f.m;
  o.r = f.r;
  o.seed = f.seed;
  o.mode = runtime::parse_mode(f.mode);
  o.transport = runtime::parse_transport(f.transport);
  o.port = f.port;
  o.dn = f.dn;
  o.cv_rule = grouplasso::parse_cv_rule(f.cv_rule);
  o.spawn_workers = f.spawn_workers;
  o.timeout = std::chrono::milliseconds(static_cast<long long>(f.timeout_s * 1000.0));
  if (o.mode == runtime::Mode::Oracle) {
    o.oracle_set = read_truth_active(f.truth.empty() ? f.input + ".truth" : f.truth);
    for (auto j : o.oracle_set)
      if (j >= data.p()) fail(ErrorKind::UnknownFeature, fmt::format("truth lists feature {} but p={}", j + 1, data.p()));
  }
  return o;
}

std::string header(const std::string& command, const runtime::FitResult& fit, const FitFlags& f) {
  std::string out = fmt::format("# ddac {}\n", command);
  out += fmt::format("# mode={} m={} r={} seed={} transport={} cv_rule={}\n", runtime::to_string(fit.mode), fit.m, fit.r,
                     fit.seed, f.transport, f.cv_rule);
  out += fmt::format("# n={} p={} dn={} dn_source={}\n", fit.n, fit.p, fit.dn, f.dn ? "override" : "auto");
  return out;
}

fs::path prepare_dir(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) fail(ErrorKind::MissingFile, fmt::format("cannot create {}: {}", dir, ec.message()));
  return p;
}

int cmd_fit(const FitFlags& f, const std::string& out_dir, std::ostream& out, std::ostream& err) {
  const auto data = load_dataset(f.input, f.response);
  const auto fit = runtime::run_ddac_spam(data, to_options(f, data));
  const auto head = header("fit", fit, f);
  const auto& names = data.names();

  std::string sel = head + "feature\tname\tmachine\tlocal\n";
  for (auto j : fit.selected) {
    const auto slot = fit.plan.assignment[j];
    sel += fmt::format("{}\t{}\t{}\t{}\n", j + 1, names[j], slot.machine + 1, slot.local + 1);
  }

  std::string coef = head + fmt::format("# intercept={:.17g} ridge_penalty={:.17g}\n", fit.intercept, fit.ridge_penalty);
  coef += "feature\tindex\tcoef\n";
  for (const auto& ff : fit.f_hat)
    for (Eigen::Index k = 0; k < ff.coef.size(); ++k)
      coef += fmt::format("{}\t{}\t{:.17g}\n", ff.feature + 1, k + 1, ff.coef(k));

  std::string fun = head + "feature\tx\tf\n";
  for (const auto& ff : fit.f_hat) {
    const Vector grid = Vector::LinSpaced(200, ff.encoder.basis.lower, ff.encoder.basis.upper);
    const Vector vals = ff.evaluate(grid);
    for (Eigen::Index i = 0; i < grid.size(); ++i)
      fun += fmt::format("{}\t{:.10g}\t{:.10g}\n", ff.feature + 1, grid(i), vals(i));
  }

  std::string tim = head + "phase\tseconds\n";
  for (const auto& t : fit.timings) tim += fmt::format("{}\t{:.6f}\n", t.phase, t.seconds);

  const auto dir = prepare_dir(out_dir);
  write_file_atomic(dir / "selection.txt", sel);
  write_file_atomic(dir / "coefficients.txt", coef);
  write_file_atomic(dir / "functions.txt", fun);
  write_file_atomic(dir / "timings.txt", tim);

  std::string listed;
  for (auto j : fit.selected) listed += fmt::format("{}{}", listed.empty() ? "" : ",", j + 1);
  out << fmt::format("mode={} selected={} [{}] total={:.3f}s\n", runtime::to_string(fit.mode), fit.selected.size(),
                     listed, fit.timing("total"));
  out << fmt::format("wrote {}\n", dir.string());
  if (!fit.converged) {
    err << "error: NotConverged: a local group-lasso solve hit the sweep cap\n";
    return kNotConverged;
  }
  return kOk;
}

int cmd_infer(const FitFlags& f, std::vector<std::size_t> features, bool all, double alpha, const std::string& out_path,
              std::ostream& out) {
  const auto data = load_dataset(f.input, f.response);
  if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorKind::InvalidArgument, "alpha must lie in (0, 1)");
  if (all) {
    features.clear();
    for (std::size_t j = 1; j <= data.p(); ++j) features.push_back(j);
  }
  if (features.empty()) fail(ErrorKind::InvalidArgument, "give --features or --all");
  std::vector<std::size_t> zero_based;
  for (auto j : features) {
    if (j == 0 || j > data.p())
      fail(ErrorKind::UnknownFeature, fmt::format("feature {} is outside 1..{}", j, data.p()));
    zero_based.push_back(j - 1);
  }
  auto options = to_options(f, data);
  if (options.mode == runtime::Mode::Oracle) fail(ErrorKind::InvalidArgument, "inference is not available in oracle mode");

  runtime::Session session(data, options);
  const auto reports = session.test(zero_based, alpha);
  std::string text = header("infer", session.result(), f) + fmt::format("# alpha={}\n", alpha);
  text += "feature\tname\tmachine\tlocal\tstatistic\tdof\tp_value\tdecision\n";
  for (const auto& rep : reports)
    text += fmt::format("{}\t{}\t{}\t{}\t{:.6g}\t{}\t{:.6g}\t{}\n", rep.feature + 1, data.names()[rep.feature],
                        rep.machine + 1, rep.local + 1, rep.statistic, rep.dof, rep.p_value,
                        inference::to_string(rep.decision));
  session.close();
  if (!out_path.empty()) write_file_atomic(out_path, text);
  out << text;
  return kOk;
}

synthgen::ScenarioSpec read_scenario(const std::string& arg) {
  std::string text = arg;
  std::error_code ec;
  if (fs::is_regular_file(arg, ec)) {
    std::ifstream in(arg);
    std::stringstream buf;
    buf << in.rdbuf();
    text = buf.str();
  } else if (arg.find('=') == std::string::npos) {
    text = "scenario=" + arg;
  }
  return synthgen::parse_scenario(text);
}

int cmd_simulate(const std::string& scenario, std::uint64_t seed, const std::string& out_path, std::ostream& out) {
  auto spec = read_scenario(scenario);
  spec.seed = seed;
  const auto data = spec.scenario == synthgen::Scenario::Fig3 ? synthgen::gen_fig3(spec.a, spec.n, spec.p, seed)
                                                              : synthgen::gen_example(spec);
  synthgen::write_dataset_csv(data, out_path);
  synthgen::write_truth_sidecar(data, spec, out_path + ".truth");
  out << fmt::format("wrote {} (n={} p={}) and {}.truth\n", out_path, data.n(), data.p(), out_path);
  return kOk;
}

struct StudyFlags {
  std::vector<std::string> scenarios;
  std::size_t reps = 1;
  std::uint64_t seed = 0;
  std::vector<std::string> modes;
  std::vector<std::size_t> m_values;
  double r = 1.0;
  std::optional<std::size_t> dn;
  std::vector<double> a_grid;
  double alpha = 0.05;
  std::string cv_rule = "1se";
  std::string out;
};

int cmd_study(const StudyFlags& f, std::ostream& out) {
  if (f.reps == 0) fail(ErrorKind::InvalidArgument, "--reps must be positive");
  std::vector<synthgen::ScenarioSpec> specs;
  for (const auto& s : f.scenarios) specs.push_back(read_scenario(s));
  const bool testing = std::any_of(specs.begin(), specs.end(),
                                   [](const auto& s) { return s.scenario == synthgen::Scenario::Fig3; });

  std::string text, records;
  if (testing) {
    if (specs.size() != 1) fail(ErrorKind::InvalidScenario, "the fig3 testing study runs alone");
    metrics::TestingConfig config;
    config.reps = f.reps;
    config.seed = f.seed;
    config.alpha = f.alpha;
    config.n = specs[0].n;
    config.p = specs[0].p;
    config.r = f.r;
    config.cv_rule = grouplasso::parse_cv_rule(f.cv_rule);
    if (!f.m_values.empty()) config.m = f.m_values.front();
    if (!f.a_grid.empty()) config.a_grid = f.a_grid;
    const auto points = metrics::testing_study(config);
    text = testing_to_text(points);
    records = testing_to_records(points);
  } else {
    metrics::StudyConfig config;
    config.scenarios = specs;
    config.reps = f.reps;
    config.seed = f.seed;
    config.r = f.r;
    config.dn = f.dn;
    config.cv_rule = grouplasso::parse_cv_rule(f.cv_rule);
    if (!f.modes.empty()) {
      config.methods.clear();
      for (const auto& m : f.modes) config.methods.push_back(runtime::parse_mode(m));
    }
    if (!f.m_values.empty()) config.m_values = f.m_values;
    const auto table = metrics::run_study(config);
    text = table.to_text();
    records = table.to_records();
  }
  if (!f.out.empty()) {
    const auto dir = prepare_dir(f.out);
    write_file_atomic(dir / "table.txt", text);
    write_file_atomic(dir / "records.csv", records);
  }
  out << text;
  return kOk;
}

struct DemoFlags {
  std::vector<double> rho{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::size_t n = 200, p = 400, dn = 5, reps = 10, pairs = 2000;
  std::uint64_t seed = 0;
  double r = 1.0;
  std::string out;
};

int cmd_decorrelate_demo(const DemoFlags& f, std::ostream& out) {
  if (f.reps == 0) fail(ErrorKind::InvalidArgument, "--reps must be positive");
  std::string text = fmt::format("# ddac decorrelate-demo\n# n={} p={} dn={} r={} reps={} seed={}\n", f.n, f.p, f.dn,
                                 f.r, f.reps, f.seed);
  text += "rho,stage,min,q1,median,q3,max,median_abs\n";
  for (double rho : f.rho) {
    if (!(rho >= 0.0 && rho < 1.0)) fail(ErrorKind::InvalidScenario, fmt::format("rho={} outside [0, 1)", rho));
    std::vector<double> before, after;
    for (std::size_t k = 0; k < f.reps; ++k) {
      const auto s = decorrelate::quasi_correlation_study(f.n, f.p, rho, f.dn, derive_seed(f.seed, k), f.pairs, f.r);
      before.insert(before.end(), s.before.begin(), s.before.end());
      after.insert(after.end(), s.after.begin(), s.after.end());
    }
    for (const auto& [stage, values] : {std::pair{"before", &before}, std::pair{"after", &after}}) {
      const auto q = decorrelate::summarize(*values);
      text += fmt::format("{},{},{:.6g},{:.6g},{:.6g},{:.6g},{:.6g},{:.6g}\n", rho, stage, q.min, q.q1, q.median, q.q3,
                          q.max, q.median_abs);
    }
  }
  if (!f.out.empty()) write_file_atomic(f.out, text);
  out << text;
  return kOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Distributed sparse additive modelling with decorrelation"};
  app.name("ddac");
  app.require_subcommand(1);

  FitFlags fit_flags;
  std::string fit_out = "ddac_fit";
  auto* fit = app.add_subcommand("fit", "fit the additive model and write selection, coefficients and curves");
  add_fit_flags(*fit, fit_flags);
  fit->add_option("--out", fit_out, "output directory")->capture_default_str();

  FitFlags infer_flags;
  std::vector<std::size_t> features;
  bool all = false;
  double alpha = 0.05;
  std::string infer_out;
  auto* infer = app.add_subcommand("infer", "chi-squared tests of H0: f_j = 0");
  add_fit_flags(*infer, infer_flags);
  infer->add_option("--features", features, "1-based feature indices")->delimiter(',');
  infer->add_flag("--all", all, "test every feature");
  infer->add_option("--alpha", alpha, "significance level")->capture_default_str();
  infer->add_option("--out", infer_out, "records file");

  std::string sim_scenario, sim_out;
  std::uint64_t sim_seed = 0;
  auto* simulate = app.add_subcommand("simulate", "generate a synthetic dataset and its ground-truth sidecar");
  simulate->add_option("--scenario", sim_scenario, "scenario name, key=value text, or a config file")->required();
  simulate->add_option("--seed", sim_seed, "random seed")->required();
  simulate->add_option("--out", sim_out, "CSV path; the sidecar is <out>.truth")->required();

  StudyFlags study_flags;
  auto* study = app.add_subcommand("study", "repeated simulation study (fig3 runs the testing study)");
  study->add_option("--scenario", study_flags.scenarios, "scenario(s)")->required();
  study->add_option("--reps", study_flags.reps, "repetitions")->capture_default_str();
  study->add_option("--seed", study_flags.seed, "random seed")->required();
  study->add_option("--mode", study_flags.modes, "methods (default: all four)")->delimiter(',');
  study->add_option("--m", study_flags.m_values, "machine counts")->delimiter(',');
  study->add_option("--r", study_flags.r, "decorrelation ridge")->capture_default_str();
  study->add_option("--dn", study_flags.dn, "basis functions per feature");
  study->add_option("--a", study_flags.a_grid, "signal scales for the testing study")->delimiter(',');
  study->add_option("--alpha", study_flags.alpha, "significance level for the testing study")->capture_default_str();
  study->add_option("--cv-rule", study_flags.cv_rule, "lambda choice: min | 1se")->capture_default_str();
  study->add_option("--out", study_flags.out, "directory for table.txt and records.csv");

  DemoFlags demo_flags;
  auto* demo = app.add_subcommand("decorrelate-demo", "quasi-correlations before and after decorrelation over a rho grid");
  demo->add_option("--rho", demo_flags.rho, "equicorrelation grid")->delimiter(',');
  demo->add_option("--n", demo_flags.n, "rows")->capture_default_str();
  demo->add_option("--p", demo_flags.p, "features")->capture_default_str();
  demo->add_option("--dn", demo_flags.dn, "basis functions per feature")->capture_default_str();
  demo->add_option("--reps", demo_flags.reps, "seeds per rho")->capture_default_str();
  demo->add_option("--pairs", demo_flags.pairs, "feature pairs sampled per seed")->capture_default_str();
  demo->add_option("--seed", demo_flags.seed, "random seed")->capture_default_str();
  demo->add_option("--r", demo_flags.r, "decorrelation ridge")->capture_default_str();
  demo->add_option("--out", demo_flags.out, "records file");

  std::uint16_t worker_port = 0;
  bool persistent = false;
  double worker_timeout = 600.0;
  auto* serve = app.add_subcommand("serve-worker", "run one worker for the socket transport");
  serve->add_option("--port", worker_port, "listening port")->required();
  serve->add_flag("--persistent", persistent, "keep serving sessions until idle for --timeout");
  serve->add_option("--timeout", worker_timeout, "idle seconds before exiting")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*fit) return cmd_fit(fit_flags, fit_out, out, err);
    if (*infer) return cmd_infer(infer_flags, features, all, alpha, infer_out, out);
    if (*simulate) return cmd_simulate(sim_scenario, sim_seed, sim_out, out);
    if (*study) return cmd_study(study_flags, out);
    if (*demo) return cmd_decorrelate_demo(demo_flags, out);
    if (*serve) {
      runtime::serve_worker(worker_port, persistent,
                            std::chrono::milliseconds(static_cast<long long>(worker_timeout * 1000.0)));
      return kOk;
    }
  } catch (const runtime::WorkerFailure& e) {
    err << fmt::format("error: WorkerFailure: machine {}: {}\n", e.machine() + 1, e.detail());
    return kRuntimeError;
  } catch (const Error& e) {
    err << fmt::format("error: {}: {}\n", to_string(e.kind()), e.detail());
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << fmt::format("error: {}\n", e.what());
    return kRuntimeError;
  }
  return kUsage;
}

}  // namespace ddac::cli
