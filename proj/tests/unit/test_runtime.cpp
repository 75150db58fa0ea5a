#include <doctest.h>

#include <map>
#include <thread>

#include "ddac/errors.hpp"
#include "ddac/runtime.hpp"
#include "ddac/synthgen.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace ddac;
using namespace ddac::runtime;
using wire::Kind;

namespace {

Dataset toy(std::size_t n, std::size_t p, std::uint64_t seed) {
  synthgen::ScenarioSpec spec;
  spec.scenario = synthgen::Scenario::Example1;
  spec.n = n;
  spec.p = p;
  spec.seed = seed;
  return synthgen::gen_example(spec);
}

RunOptions opts(std::size_t m, Mode mode, std::uint64_t seed = 0) {
  RunOptions o;
  o.m = m;
  o.mode = mode;
  o.seed = seed;
  o.path_length = 100;
  return o;
}

}  // namespace

TEST_CASE("ridge_solve matches the normal equations") {
  std::mt19937_64 gen(1);
  const Matrix x = testing::random_matrix(30, 6, gen);
  const Vector y = testing::random_vector(30, gen);
  for (double pen : {0.01, 1.0, 50.0})
    CHECK((ridge_solve(x, y, pen) - oracle::ridge_normal(x, y, pen)).cwiseAbs().maxCoeff() < 1e-10);
  const Matrix sq = testing::random_matrix(6, 6, gen) + 5.0 * Matrix::Identity(6, 6);
  const Vector ys = testing::random_vector(6, gen);
  CHECK((ridge_solve(sq, ys, 0.0) - sq.lu().solve(ys)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("ridge_refine") {
  std::mt19937_64 gen(2);
  const Vector y = testing::random_vector(40, gen).array() + 3.0;
  const auto empty = ridge_refine(y, Matrix(40, 0), 5, 1);
  CHECK(empty.beta.size() == 0);
  CHECK(empty.intercept == doctest::Approx(y.mean()));

  const Matrix x = testing::random_matrix(40, 5, gen);
  const auto fit = ridge_refine(y, x, 5, 1);
  CHECK(fit.grid.size() == 50);
  CHECK(fit.cv_errors.size() == 50);
  CHECK(std::find(fit.grid.begin(), fit.grid.end(), fit.penalty) != fit.grid.end());
  const Vector centered = y.array() - y.mean();
  CHECK((fit.beta - oracle::ridge_normal(x, centered, fit.penalty)).cwiseAbs().maxCoeff() < 1e-9);

  // shrinkage along the grid tail
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t t = 40; t < fit.grid.size(); ++t) {
    const double norm = ridge_solve(x, centered, fit.grid[t]).norm();
    CHECK(norm < prev);
    prev = norm;
  }
  CHECK(ridge_solve(x, centered, 1e12).norm() < 1e-8);

  try {
    ridge_refine(Vector::Ones(3), Matrix::Ones(3, 13), 2, 1);
    FAIL("expected OverSelected");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::OverSelected);
  }
}

TEST_CASE("parse helpers") {
  CHECK(parse_mode("ddac") == Mode::Ddac);
  CHECK(parse_mode("oracle") == Mode::Oracle);
  CHECK(to_string(Mode::Spam) == "spam");
  CHECK(parse_transport("socket") == TransportKind::Socket);
  CHECK_THROWS_AS(parse_mode("fast"), Error);
}

TEST_CASE("fit is deterministic and carries a consistent census") {
  const auto data = toy(120, 12, 3);
  const auto a = run_ddac_spam(data, opts(3, Mode::Ddac, 5));
  const auto b = run_ddac_spam(data, opts(3, Mode::Ddac, 5));
  CHECK(identical(a, b));
  CHECK(a.dn == spline::compute_dn(120));

  std::map<std::pair<Kind, std::uint32_t>, int> count;
  for (const auto& rec : a.messages) ++count[{rec.kind, rec.from}];
  for (std::uint32_t w = 1; w <= 3; ++w) {
    CHECK(count[{Kind::GramContribution, w}] == 1);
    CHECK(count[{Kind::LocalSelection, w}] == 1);
    CHECK(count[{Kind::FittedValues, w}] == 1);
  }
  int f_sent = 0;
  for (const auto& rec : a.messages)
    if (rec.kind == Kind::FOperator) {
      ++f_sent;
      CHECK(rec.payload_bytes == 8 + 120 * 120 * 8);
    }
  CHECK(f_sent == 3);  // one broadcast to each busy worker

  const auto c = run_ddac_spam(data, opts(3, Mode::Ddac, 6));
  CHECK(!identical(a, c));
}

TEST_CASE("dac mode skips the Gram exchange") {
  const auto data = toy(100, 10, 4);
  const auto fit = run_ddac_spam(data, opts(2, Mode::Dac));
  for (const auto& rec : fit.messages) {
    CHECK(rec.kind != Kind::GramContribution);
    CHECK(rec.kind != Kind::FOperator);
  }
}

TEST_CASE("surplus machines stay idle") {
  const auto data = toy(80, 4, 5);
  const auto fit = run_ddac_spam(data, opts(6, Mode::Ddac));
  CHECK(fit.per_worker.size() == 4);
  int assigned = 0;
  for (const auto& rec : fit.messages)
    if (rec.kind == Kind::AssignFeatures) ++assigned;
  CHECK(assigned == 4);
}

TEST_CASE("spam is dac with a single machine") {
  const auto data = toy(100, 8, 6);
  auto spam = run_ddac_spam(data, opts(7, Mode::Spam));
  const auto dac = run_ddac_spam(data, opts(1, Mode::Dac));
  CHECK(spam.m == 1);
  spam.mode = Mode::Dac;
  CHECK(identical(spam, dac));
}

TEST_CASE("oracle mode refits on the true set") {
  const auto data = toy(150, 10, 7);
  auto o = opts(3, Mode::Oracle);
  o.oracle_set = data.truth()->active_set;
  const auto fit = run_ddac_spam(data, o);
  CHECK(fit.selected == data.truth()->active_set);
  CHECK(fit.f_hat.size() == 4);
  for (const auto& rec : fit.messages) CHECK(rec.kind != Kind::GramContribution);
}

TEST_CASE("strong toy signal is recovered and predictions are on the response scale") {
  // p * dn above n: with fewer basis columns than rows F also shrinks the signal directions
  const auto data = toy(200, 60, 8);
  const auto fit = run_ddac_spam(data, opts(2, Mode::Ddac));
  for (auto j : data.truth()->active_set)
    CHECK(std::find(fit.selected.begin(), fit.selected.end(), j) != fit.selected.end());
  const Vector pred = fit.predict(data.x());
  const double r2 = 1.0 - (data.y() - pred).squaredNorm() / (data.y().array() - data.y().mean()).matrix().squaredNorm();
  CHECK(r2 > 0.8);
  // predict is the sum of the component curves plus the intercept
  Vector manual = Vector::Constant(data.n(), fit.intercept);
  for (const auto& ff : fit.f_hat) manual += ff.evaluate(data.x().col(static_cast<Eigen::Index>(ff.feature)));
  CHECK((manual - pred).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("empty selection gives the intercept-only fit") {
  bool seen = false;
  for (std::uint64_t seed = 0; seed < 10 && !seen; ++seed) {
    Rng rng(seed);
    Matrix x(60, 4);
    Vector y(60);
    for (Eigen::Index i = 0; i < 60; ++i) {
      for (Eigen::Index j = 0; j < 4; ++j) x(i, j) = rng.uniform();
      y(i) = rng.normal();
    }
    const Dataset data(y, x);
    const auto fit = run_ddac_spam(data, opts(2, Mode::Ddac, seed));
    if (!fit.selected.empty()) continue;
    seen = true;
    CHECK(fit.beta_hat.size() == 0);
    CHECK(fit.intercept == doctest::Approx(y.mean()));
    CHECK((fit.predict(x).array() - y.mean()).abs().maxCoeff() < 1e-12);
  }
  CHECK(seen);
}

TEST_CASE("input validation") {
  const auto data = toy(60, 5, 9);
  auto bad = opts(0, Mode::Ddac);
  CHECK_THROWS_AS(run_ddac_spam(data, bad), Error);
  auto oracle = opts(2, Mode::Oracle);
  oracle.oracle_set = {7};
  CHECK_THROWS_AS(run_ddac_spam(data, oracle), Error);
  Matrix x(6, 2);
  x << 1, 2, 3, 4, 5, 6, 7, 8, 9, 1, 2, 3;
  const Dataset tiny(Vector::LinSpaced(6, 0, 1), x);
  try {
    run_ddac_spam(tiny, opts(1, Mode::Dac));
    FAIL("expected TooFewRows");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::TooFewRows);
  }
}

TEST_CASE("socket transport reproduces the in-process result bit for bit") {
  const auto data = toy(120, 9, 10);
  const auto local = run_ddac_spam(data, opts(3, Mode::Ddac, 2));

  auto spawned = opts(3, Mode::Ddac, 2);
  spawned.transport = TransportKind::Socket;
  spawned.spawn_workers = true;
  spawned.port = testing::free_ports(3);
  CHECK(identical(local, run_ddac_spam(data, spawned)));

  // three independently served workers
  auto served = spawned;
  served.spawn_workers = false;
  served.port = testing::free_ports(3);
  std::vector<std::thread> workers;
  for (int i = 0; i < 3; ++i)
    workers.emplace_back([port = served.port + i] { serve_worker(static_cast<std::uint16_t>(port), false, std::chrono::seconds(20)); });
  const auto remote = run_ddac_spam(data, served);
  for (auto& t : workers) t.join();
  CHECK(identical(local, remote));
}

TEST_CASE("m = 1 in-process matches socket") {
  const auto data = toy(90, 5, 11);
  auto a = opts(1, Mode::Ddac, 3);
  auto b = a;
  b.transport = TransportKind::Socket;
  b.spawn_workers = true;
  b.port = testing::free_ports(1);
  CHECK(identical(run_ddac_spam(data, a), run_ddac_spam(data, b)));
}

TEST_CASE("a worker that dies mid-phase surfaces as WorkerFailure") {
  const auto data = toy(80, 6, 12);
  auto o = opts(2, Mode::Ddac);
  o.transport = TransportKind::Socket;
  o.port = testing::free_ports(2);
  o.timeout = std::chrono::milliseconds(5000);
  std::thread good([port = o.port] { serve_worker(port, false, std::chrono::seconds(10)); });
  std::thread bad([port = o.port + 1] {
    transport::Listener listener(static_cast<std::uint16_t>(port));
    auto ch = listener.accept(std::chrono::seconds(10));
    ch->receive(std::chrono::seconds(10));  // take the assignment, then vanish
    ch->close();
  });
  const auto start = std::chrono::steady_clock::now();
  try {
    run_ddac_spam(data, o);
    FAIL("expected WorkerFailure");
  } catch (const WorkerFailure& e) {
    CHECK(e.machine() == 1);
    CHECK(!e.partial_timings().empty());
  }
  CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(5));
  good.join();
  bad.join();
}

TEST_CASE("a silent worker times out") {
  const auto data = toy(80, 6, 13);
  auto o = opts(1, Mode::Ddac);
  o.transport = TransportKind::Socket;
  o.port = testing::free_ports(1);
  o.timeout = std::chrono::milliseconds(300);
  std::atomic<bool> done{false};
  std::thread mute([&, port = o.port] {
    transport::Listener listener(port);
    auto ch = listener.accept(std::chrono::seconds(10));
    while (!done) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  });
  CHECK_THROWS_AS(run_ddac_spam(data, o), WorkerFailure);
  done = true;
  mute.join();
}

TEST_CASE("session tests report global indices and valid p-values") {
  const auto data = toy(200, 10, 14);
  Session s(data, opts(3, Mode::Ddac));
  const auto reports = s.test({0, 9, 4}, 0.05);
  REQUIRE(reports.size() == 3);
  CHECK(reports[0].feature == 0);
  CHECK(reports[1].feature == 9);
  for (const auto& r : reports) {
    CHECK(r.p_value >= 0.0);
    CHECK(r.p_value <= 1.0);
    CHECK(r.dof == s.result().dn);
    CHECK(r.machine == s.result().plan.assignment[r.feature].machine);
    CHECK(r.local == s.result().plan.assignment[r.feature].local);
  }
  CHECK(reports[0].decision == inference::Decision::Reject);
  try {
    s.test(10, 0.05);
    FAIL("expected UnknownFeature");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UnknownFeature);
  }
  s.close();
}

TEST_CASE("test statistics do not depend on the location and scale of y") {
  const auto data = toy(150, 40, 15);
  const Dataset moved(3.0 * data.y().array() + 5.0, data.x());
  Session a(data, opts(2, Mode::Ddac)), b(moved, opts(2, Mode::Ddac));
  for (std::size_t j : {0u, 7u, 33u}) {
    const auto ra = a.test(j, 0.05), rb = b.test(j, 0.05);
    CHECK(rb.statistic == doctest::Approx(ra.statistic).epsilon(1e-8));
    CHECK(rb.sigma_hat == doctest::Approx(3.0 * ra.sigma_hat).epsilon(1e-8));
  }
}
