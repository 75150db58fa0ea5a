#include "ddac/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "ddac/errors.hpp"
#include "ddac/log.hpp"

namespace ddac::metrics {

Confusion confusion(std::vector<std::size_t> s_hat, std::vector<std::size_t> s_true) {
  const std::set<std::size_t> a(s_hat.begin(), s_hat.end()), b(s_true.begin(), s_true.end());
  Confusion c;
  for (auto j : a) (b.count(j) ? c.tp : c.fp) += 1;
  c.fn = b.size() - c.tp;
  return c;
}

double mse_h(const runtime::FitResult& fit, const GroundTruth& truth, const Matrix& test_points) {
  if (test_points.rows() == 0) fail(ErrorKind::InvalidArgument, "empty test sample");
  const Vector diff = fit.predict(test_points) - truth.h(test_points);
  return diff.squaredNorm() / static_cast<double>(diff.size());
}

Summary summarize(const std::vector<double>& values) {
  Summary s;
  if (values.empty()) return s;
  const double count = static_cast<double>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / count;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / (count - 1.0));
  }
  return s;
}

namespace {

template <typename Get>
Summary summarize_runs(const std::vector<RunMetrics>& runs, Get get) {
  std::vector<double> values;
  values.reserve(runs.size());
  for (const auto& r : runs) values.push_back(get(r));
  return summarize(values);
}

std::string cell_text(const Summary& s) {
  if (!s.sd) return fmt::format("{:.3f}", s.mean);
  return fmt::format("{:.3f} ({:.3f})", s.mean, *s.sd);
}

std::string sd_text(const Summary& s) { return s.sd ? fmt::format("{:.17g}", *s.sd) : std::string(); }

}  // namespace

Summary StudyCell::fp() const { return summarize_runs(runs, [](const RunMetrics& r) { return double(r.fp); }); }
Summary StudyCell::fn() const { return summarize_runs(runs, [](const RunMetrics& r) { return double(r.fn); }); }
Summary StudyCell::mse() const { return summarize_runs(runs, [](const RunMetrics& r) { return r.mse; }); }
Summary StudyCell::mse_train() const { return summarize_runs(runs, [](const RunMetrics& r) { return r.mse_train; }); }
Summary StudyCell::seconds() const { return summarize_runs(runs, [](const RunMetrics& r) { return r.seconds; }); }

const StudyCell* StudyTable::find(const std::string& scenario, runtime::Mode method, std::size_t m) const {
  for (const auto& row : rows)
    if (row.scenario == scenario && row.method == method && row.m == m) return &row;
  return nullptr;
}

std::string StudyTable::to_text() const {
  std::string out = fmt::format("{:<10} {:<7} {:>4} {:>16} {:>16} {:>16} {:>16} {:>16} {:>5} {:>5}\n", "scenario",
                                "method", "m", "FP", "FN", "MSE(test)", "MSE(train)", "time(s)", "runs", "fail");
  for (const auto& row : rows)
    out += fmt::format("{:<10} {:<7} {:>4} {:>16} {:>16} {:>16} {:>16} {:>16} {:>5} {:>5}\n", row.scenario,
                       runtime::to_string(row.method), row.m, cell_text(row.fp()), cell_text(row.fn()),
                       cell_text(row.mse()), cell_text(row.mse_train()), cell_text(row.seconds()), row.runs.size(),
                       row.failures);
  return out;
}

std::string StudyTable::to_records() const {
  std::string out = "scenario,method,m,metric,mean,sd,runs,failures\n";
  for (const auto& row : rows) {
    const std::pair<const char*, Summary> metrics[] = {
        {"fp", row.fp()}, {"fn", row.fn()}, {"mse", row.mse()}, {"mse_train", row.mse_train()}, {"seconds", row.seconds()}};
    for (const auto& [name, s] : metrics)
      out += fmt::format("{},{},{},{},{:.17g},{},{},{}\n", row.scenario, runtime::to_string(row.method), row.m, name,
                         s.mean, sd_text(s), row.runs.size(), row.failures);
  }
  return out;
}

StudyTable run_study(const StudyConfig& config) {
  if (config.reps < 1) fail(ErrorKind::InvalidArgument, "a study needs at least one repetition");
  StudyTable table;
  for (const auto& base : config.scenarios) {
    const auto name = synthgen::scenario_name(base.scenario);
    // Cell layout first, so the table order does not depend on failures.
    const std::size_t first = table.rows.size();
    for (auto m : config.m_values)
      for (auto method : config.methods) {
        const std::size_t cell_m = method == runtime::Mode::Spam ? 1 : m;
        if (method == runtime::Mode::Spam && std::any_of(table.rows.begin() + first, table.rows.end(), [&](const StudyCell& c) {
              return c.method == runtime::Mode::Spam;
            }))
          continue;
        table.rows.push_back({name, method, cell_m, {}, 0, {}});
      }

    for (std::size_t rep = 0; rep < config.reps; ++rep) {
      auto spec = base;
      spec.seed = derive_seed(base.seed ^ config.seed, rep);
      const auto data = synthgen::gen_example(spec);
      const auto test_points = synthgen::gen_test_points(spec, spec.n, derive_seed(spec.seed, 99));
      const auto& truth = *data.truth();
      for (std::size_t c = first; c < table.rows.size(); ++c) {
        auto& cell = table.rows[c];
        runtime::RunOptions options;
        options.m = cell.m;
        options.r = config.r;
        options.seed = derive_seed(spec.seed, 17);
        options.mode = cell.method;
        options.dn = config.dn;
        options.path_length = config.path_length;
        options.cv_rule = config.cv_rule;
        options.oracle_set = truth.active_set;
        try {
          const auto fit = runtime::run_ddac_spam(data, options);
          const auto conf = confusion(fit.selected, truth.active_set);
          RunMetrics run;
          run.fp = conf.fp;
          run.fn = conf.fn;
          run.mse = mse_h(fit, truth, test_points);
          const Vector train_diff = fit.predict(data.x()) - truth.h_values;
          run.mse_train = train_diff.squaredNorm() / static_cast<double>(train_diff.size());
          run.seconds = fit.timing("total");
          run.timings = fit.timings;
          cell.runs.push_back(std::move(run));
        } catch (const Error& e) {
          ++cell.failures;
          cell.failure_messages.push_back(e.what());
          log(LogLevel::Info, fmt::format("{} {} m={} rep {}: {}", name, runtime::to_string(cell.method), cell.m, rep, e.what()));
        }
      }
      log(LogLevel::Info, fmt::format("{}: repetition {}/{} done", name, rep + 1, config.reps));
    }
  }
  return table;
}

std::vector<TestingPoint> testing_study(const TestingConfig& config) {
  for (double a : config.a_grid)
    if (!(a >= 0.0 && a <= 1.0)) fail(ErrorKind::InvalidArgument, fmt::format("signal scale a = {} outside [0, 1]", a));
  for (auto j : config.null_features)
    if (j >= config.p) fail(ErrorKind::OutOfRange, fmt::format("null feature {} exceeds p", j + 1));

  std::vector<TestingPoint> points;
  for (double a : config.a_grid) {
    TestingPoint point;
    point.a = a;
    std::size_t null_rejects = 0, active_rejects = 0;
    for (std::size_t rep = 0; rep < config.reps; ++rep) {
      const auto data_seed = derive_seed(config.seed, rep);
      const auto data = synthgen::gen_fig3(a, config.n, config.p, data_seed);
      runtime::RunOptions options;
      options.m = config.m;
      options.r = config.r;
      options.seed = derive_seed(data_seed, 17);
      options.path_length = config.path_length;
      options.cv_rule = config.cv_rule;
      try {
        runtime::Session session(data, options);
        std::size_t nr = 0, ar = 0;
        std::vector<double> stats;
        for (auto j : config.null_features) {
          const auto report = session.test(j, config.alpha);
          nr += report.decision == inference::Decision::Reject;
          stats.push_back(report.statistic);
        }
        for (auto j : config.active_features)
          ar += session.test(j, config.alpha).decision == inference::Decision::Reject;
        null_rejects += nr;
        active_rejects += ar;
        point.null_tests += config.null_features.size();
        point.active_tests += config.active_features.size();
        point.null_statistics.insert(point.null_statistics.end(), stats.begin(), stats.end());
        ++point.runs;
      } catch (const Error& e) {
        ++point.failures;
        log(LogLevel::Info, fmt::format("testing a={} rep {}: {}", a, rep, e.what()));
      }
    }
    point.type1 = point.null_tests ? double(null_rejects) / double(point.null_tests) : 0.0;
    point.power = point.active_tests ? double(active_rejects) / double(point.active_tests) : 0.0;
    if (a == 0.0 && point.null_tests + point.active_tests > 0)
      point.power = double(null_rejects + active_rejects) / double(point.null_tests + point.active_tests);
    log(LogLevel::Info, fmt::format("a={}: type-I {:.3f}, power {:.3f}", a, point.type1, point.power));
    points.push_back(std::move(point));
  }
  return points;
}

std::string testing_to_text(const std::vector<TestingPoint>& points) {
  std::string out = fmt::format("{:>6} {:>8} {:>8} {:>6} {:>6}\n", "a", "type-I", "power", "runs", "fail");
  for (const auto& pt : points)
    out += fmt::format("{:>6.2f} {:>8.4f} {:>8.4f} {:>6} {:>6}\n", pt.a, pt.type1, pt.power, pt.runs, pt.failures);
  return out;
}

std::string testing_to_records(const std::vector<TestingPoint>& points) {
  std::string out = "a,type1,power,runs,failures\n";
  for (const auto& pt : points)
    out += fmt::format("{},{:.17g},{:.17g},{},{}\n", pt.a, pt.type1, pt.power, pt.runs, pt.failures);
  return out;
}

}  // namespace ddac::metrics
