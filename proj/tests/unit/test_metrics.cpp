#include <doctest.h>

#include "ddac/metrics.hpp"
#include "support.hpp"

using namespace ddac;
using namespace ddac::metrics;

TEST_CASE("confusion") {
  const std::vector<std::size_t> s{0, 1, 2, 3};
  auto c = confusion(s, s);
  CHECK(c.fp == 0);
  CHECK(c.fn == 0);
  CHECK(c.tp == 4);
  c = confusion({}, s);
  CHECK(c.fp == 0);
  CHECK(c.fn == 4);
  c = confusion({0, 1, 8}, s);
  CHECK(c.fp == 1);
  CHECK(c.fn == 2);
  c = confusion({8, 8, 0}, s);
  CHECK(c.fp == 1);
  CHECK(c.tp == 1);
}

TEST_CASE("summarize") {
  const auto one = summarize({3.0});
  CHECK(one.mean == 3.0);
  CHECK(!one.sd);
  const auto two = summarize({1.0, 3.0});
  CHECK(two.mean == 2.0);
  REQUIRE(two.sd);
  CHECK(*two.sd == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("mse_h against a hand-built fit") {
  synthgen::ScenarioSpec spec;
  spec.n = 200;
  spec.p = 6;
  spec.seed = 3;
  const auto data = synthgen::gen_example(spec);
  runtime::RunOptions o;
  o.m = 2;
  o.path_length = 100;
  const auto fit = runtime::run_ddac_spam(data, o);
  const Matrix pts = synthgen::gen_test_points(spec, 300, 5);
  const Vector diff = fit.predict(pts) - data.truth()->h(pts);
  CHECK(mse_h(fit, *data.truth(), pts) == doctest::Approx(diff.squaredNorm() / 300.0));

  // a truth assembled from the fitted curves: h_hat = h gives 0, h_hat = h + c gives c^2
  for (double c : {0.0, 0.5}) {
    GroundTruth mirror;
    for (const auto& ff : fit.f_hat)
      mirror.terms.push_back({ff.feature, "copy", [&ff](double x) {
                                Vector v(1);
                                v(0) = x;
                                return ff.evaluate(v)(0);
                              }});
    mirror.terms.push_back({0, "offset", [&](double) { return fit.intercept - c; }});
    CHECK(mse_h(fit, mirror, pts) == doctest::Approx(c * c).epsilon(1e-9));
  }
}

TEST_CASE("small study: table shape and sd columns") {
  StudyConfig config;
  synthgen::ScenarioSpec spec;
  spec.n = 120;
  spec.p = 12;
  config.scenarios = {spec};
  config.reps = 2;
  config.seed = 4;
  config.m_values = {2};
  config.path_length = 60;
  const auto table = run_study(config);
  CHECK(table.rows.size() == 4);
  const auto* cell = table.find("ex1", runtime::Mode::Ddac, 2);
  REQUIRE(cell);
  CHECK(cell->runs.size() == 2);
  CHECK(cell->fp().sd.has_value());
  const auto* spam = table.find("ex1", runtime::Mode::Spam, 1);
  REQUIRE(spam);
  const auto* oracle = table.find("ex1", runtime::Mode::Oracle, 2);
  REQUIRE(oracle);
  for (const auto& r : oracle->runs) {
    CHECK(r.fp == 0);
    CHECK(r.fn == 0);
  }
  const auto text = table.to_text();
  CHECK(text.find("(") != std::string::npos);
  const auto records = table.to_records();
  CHECK(records.rfind("scenario,method,m,metric,mean,sd,runs,failures\n", 0) == 0);
  CHECK(records.find("ex1,ddac,2,fp,") != std::string::npos);

  config.reps = 1;
  config.methods = {runtime::Mode::Ddac};
  const auto single = run_study(config);
  CHECK(!single.rows[0].fp().sd);
  CHECK(single.to_records().find(",,1,0") != std::string::npos);
}

TEST_CASE("testing study on a small grid") {
  TestingConfig config;
  config.a_grid = {0.0, 1.0};
  config.reps = 3;
  config.n = 300;
  config.p = 500;
  config.m = 4;
  config.seed = 1;
  config.path_length = 60;
  const auto points = testing_study(config);
  REQUIRE(points.size() == 2);
  CHECK(points[0].a == 0.0);
  CHECK(points[0].runs + points[0].failures == 3);
  CHECK(points[0].null_tests == points[0].runs * 10);
  INFO("runs ", points[1].runs, " failures ", points[1].failures, " tests ", points[1].active_tests);
  CHECK(points[1].power >= 0.5);
  CHECK(points[0].null_statistics.size() == points[0].null_tests);
  CHECK(testing_to_records(points).rfind("a,type1,power,runs,failures\n", 0) == 0);
}
