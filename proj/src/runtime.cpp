#include "ddac/runtime.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <fmt/format.h>

#include "ddac/decorrelate.hpp"
#include "ddac/log.hpp"

namespace ddac::runtime {

using wire::Kind;
using wire::Message;
using Clock = std::chrono::steady_clock;

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::Ddac: return "ddac";
    case Mode::Dac: return "dac";
    case Mode::Spam: return "spam";
    case Mode::Oracle: return "oracle";
  }
  return "unknown";
}

Mode parse_mode(const std::string& text) {
  for (auto mode : {Mode::Ddac, Mode::Dac, Mode::Spam, Mode::Oracle})
    if (to_string(mode) == text) return mode;
  fail(ErrorKind::InvalidArgument, fmt::format("unknown mode '{}' (ddac, dac, spam, oracle)", text));
}

std::string to_string(TransportKind kind) { return kind == TransportKind::InProcess ? "in_process" : "socket"; }

TransportKind parse_transport(const std::string& text) {
  if (text == "in_process") return TransportKind::InProcess;
  if (text == "socket") return TransportKind::Socket;
  fail(ErrorKind::InvalidArgument, fmt::format("unknown transport '{}' (in_process, socket)", text));
}

Vector FeatureFit::evaluate(const Eigen::Ref<const Vector>& x) const { return encoder.encode(x) * coef; }

Vector FitResult::predict(const Matrix& x) const {
  if (static_cast<std::size_t>(x.cols()) != p)
    fail(ErrorKind::ShapeMismatch, fmt::format("predict expects {} columns, got {}", p, x.cols()));
  Vector out = Vector::Constant(x.rows(), intercept);
  for (const auto& f : f_hat) out += f.evaluate(x.col(static_cast<Eigen::Index>(f.feature)));
  return out;
}

double FitResult::timing(const std::string& phase) const {
  for (const auto& t : timings)
    if (t.phase == phase) return t.seconds;
  return 0.0;
}

namespace {

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

template <typename Derived>
bool same_bits(const Eigen::MatrixBase<Derived>& a, const Eigen::MatrixBase<Derived>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      if (!same_bits(a(i, j), b(i, j))) return false;
  return true;
}

bool same_bits(const FeatureFit& a, const FeatureFit& b) {
  const auto &ba = a.encoder.basis, &bb = b.encoder.basis;
  if (a.feature != b.feature || ba.degree != bb.degree || ba.interior_knots.size() != bb.interior_knots.size()) return false;
  for (std::size_t i = 0; i < ba.interior_knots.size(); ++i)
    if (!same_bits(ba.interior_knots[i], bb.interior_knots[i])) return false;
  return same_bits(ba.lower, bb.lower) && same_bits(ba.upper, bb.upper) && same_bits(a.encoder.means, b.encoder.means) &&
         same_bits(a.encoder.sds, b.encoder.sds) && same_bits(a.coef, b.coef);
}

}  // namespace

bool identical(const FitResult& a, const FitResult& b) {
  if (a.mode != b.mode || a.n != b.n || a.p != b.p || a.m != b.m || a.dn != b.dn || !same_bits(a.r, b.r) ||
      a.seed != b.seed || !(a.plan == b.plan) || a.selected != b.selected || a.per_worker.size() != b.per_worker.size() ||
      a.converged != b.converged || a.messages != b.messages || a.f_hat.size() != b.f_hat.size())
    return false;
  if (!same_bits(a.beta_hat, b.beta_hat) || !same_bits(a.intercept, b.intercept) || !same_bits(a.y_mean, b.y_mean) ||
      !same_bits(a.y_scale, b.y_scale) || !same_bits(a.ridge_penalty, b.ridge_penalty) ||
      !same_bits(a.fitted_sum, b.fitted_sum))
    return false;
  for (std::size_t i = 0; i < a.per_worker.size(); ++i) {
    const auto &x = a.per_worker[i], &y = b.per_worker[i];
    if (x.machine != y.machine || x.features != y.features || x.selected != y.selected || !same_bits(x.lambda, y.lambda) ||
        x.iterations != y.iterations || x.converged != y.converged || !same_bits(x.cv_error, y.cv_error))
      return false;
  }
  for (std::size_t i = 0; i < a.f_hat.size(); ++i)
    if (!same_bits(a.f_hat[i], b.f_hat[i])) return false;
  return true;
}

WorkerFailure::WorkerFailure(std::size_t machine, const std::string& cause, std::vector<PhaseTime> partial)
    : Error(ErrorKind::WorkerFailure, fmt::format("machine {}: {}", machine + 1, cause)),
      machine_(machine),
      partial_(std::move(partial)) {}

struct Session::Impl {
  RunOptions options;
  Vector y;
  std::size_t n = 0;
  FitResult result;
  std::vector<std::unique_ptr<transport::Channel>> channels;  // index = machine (0-based)
  std::vector<std::thread> local_threads;
  std::unique_ptr<LocalWorkerPool> pool;
  std::vector<bool> open;
  Matrix f;  // decorrelation operator (identity without the F step)
  Vector eps;
  double sigma = 0.0;
  double total_width = 0.0;
  Clock::time_point phase_start = Clock::now();

  void mark(const std::string& phase) {
    const auto now = Clock::now();
    result.timings.push_back({phase, std::chrono::duration<double>(now - phase_start).count()});
    phase_start = now;
  }

  [[noreturn]] void worker_failed(std::size_t i, const std::string& cause) {
    throw WorkerFailure(i, cause, result.timings);
  }

  void send(std::size_t i, Kind kind, wire::Bytes payload) {
    const auto bytes = payload.size();
    try {
      channels[i]->send(Message{kind, 0, std::move(payload)});
    } catch (const Error& e) {
      worker_failed(i, e.what());
    }
    result.messages.push_back({kind, 0, static_cast<std::uint32_t>(i + 1), bytes});
  }

  Message expect(std::size_t i, Kind kind) {
    Message msg;
    try {
      msg = channels[i]->receive(options.timeout);
    } catch (const Error& e) {
      worker_failed(i, e.what());
    }
    result.messages.push_back({msg.kind, msg.sender, 0, msg.payload.size()});
    if (msg.kind == Kind::Error) {
      std::string text = "worker error";
      try {
        text = wire::decode_error(msg.payload).text;
      } catch (const Error&) {
      }
      worker_failed(i, text);
    }
    if (msg.kind != kind)
      worker_failed(i, fmt::format("protocol error: expected {}, got {}", wire::to_string(kind), wire::to_string(msg.kind)));
    if (msg.sender != i + 1) worker_failed(i, fmt::format("protocol error: sender id {}", msg.sender));
    return msg;
  }

  void connect_workers(std::size_t m) {
    channels.resize(m);
    open.assign(m, true);
    if (options.transport == TransportKind::InProcess) {
      for (std::size_t i = 0; i < m; ++i) {
        auto [coord, worker] = transport::in_process_pair();
        channels[i] = std::move(coord);
        local_threads.emplace_back([ch = std::move(worker), timeout = options.timeout]() mutable {
          run_worker(*ch, timeout);
        });
      }
      return;
    }
    if (options.spawn_workers) pool = std::make_unique<LocalWorkerPool>(m, options.port, options.timeout);
    for (std::size_t i = 0; i < m; ++i) {
      try {
        channels[i] = transport::connect(static_cast<std::uint16_t>(options.port + i), options.timeout);
      } catch (const Error& e) {
        worker_failed(i, e.what());
      }
    }
  }

  void shutdown_all() noexcept {
    for (std::size_t i = 0; i < channels.size(); ++i) {
      if (!channels[i]) continue;
      if (open[i]) {
        try {
          channels[i]->send(Message{Kind::Shutdown, 0, {}});
        } catch (...) {
        }
        open[i] = false;
      }
      channels[i]->close();
    }
    for (auto& t : local_threads)
      if (t.joinable()) t.join();
    local_threads.clear();
    if (pool) pool->join();
    pool.reset();
  }

  void shutdown_worker(std::size_t i) {
    send(i, Kind::Shutdown, {});
    open[i] = false;
  }

  void fit(const Dataset& data) {
    n = data.n();
    const auto p = data.p();
    const auto mode = options.mode;
    const std::size_t m = mode == Mode::Spam ? 1 : options.m;
    if (m == 0) fail(ErrorKind::InvalidArgument, "m must be at least 1");
    if (n < std::max<std::size_t>(8, options.folds))
      fail(ErrorKind::TooFewRows, fmt::format("fitting needs at least {} rows, got {}", std::max<std::size_t>(8, options.folds), n));
    if (!(options.r > 0.0)) fail(ErrorKind::InvalidArgument, "r must be positive");
    if (mode == Mode::Oracle)
      for (auto j : options.oracle_set)
        if (j >= p) fail(ErrorKind::OutOfRange, fmt::format("oracle feature {} exceeds p = {}", j + 1, p));

    y = data.y();
    auto& res = result;
    res.mode = mode;
    res.n = n;
    res.p = p;
    res.m = m;
    res.dn = options.dn ? *options.dn : spline::compute_dn(n);
    res.r = options.r;
    res.seed = options.seed;
    phase_start = Clock::now();
    const auto started = phase_start;

    // Step 1: standardize y.
    res.y_mean = y.mean();
    const Vector centered = y.array() - res.y_mean;
    res.y_scale = std::sqrt(centered.squaredNorm() / static_cast<double>(n - 1));
    if (!(res.y_scale > 0.0)) fail(ErrorKind::InvalidArgument, "response is constant");
    const Vector y_std = centered / res.y_scale;

    // Step 2: partition.
    res.plan = partition_features(p, m, options.seed);
    mark("partition");

    connect_workers(m);
    const auto phase = mode == Mode::Ddac ? wire::Phase::Decorrelate
                       : mode == Mode::Oracle ? wire::Phase::Oracle
                                              : wire::Phase::Direct;
    std::vector<std::size_t> busy;
    for (std::size_t i = 0; i < m; ++i) {
      if (res.plan.idle(i)) {
        shutdown_worker(i);
        continue;
      }
      busy.push_back(i);
      wire::AssignFeatures a;
      a.machine = static_cast<std::uint32_t>(i + 1);
      a.features = res.plan.members[i];
      a.dn = res.dn;
      a.phase = phase;
      a.cv_seed = derive_seed(options.seed, 1000 + i);
      a.folds = options.folds;
      a.path_length = options.path_length;
      a.cv_rule = options.cv_rule;
      a.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(a.features.size()));
      for (std::size_t k = 0; k < a.features.size(); ++k)
        a.x.col(static_cast<Eigen::Index>(k)) = data.x().col(static_cast<Eigen::Index>(a.features[k]));
      a.y = y_std;
      send(i, Kind::AssignFeatures, wire::encode(a));
    }
    mark("assign");

    // Steps 3-5: Gram aggregation in machine order, then F.
    const auto ni = static_cast<Eigen::Index>(n);
    if (mode == Mode::Ddac) {
      Matrix gram = Matrix::Zero(ni, ni);
      for (auto i : busy) {
        auto msg = expect(i, Kind::GramContribution);
        wire::Reader reader(msg.payload);
        const Matrix g = reader.square_matrix();
        reader.finish();
        if (g.rows() != ni) worker_failed(i, "Gram contribution has the wrong size");
        gram += g;
      }
      mark("gram");
      f = decorrelate::compute_f(gram, options.r).f;
      const auto f_payload = wire::Writer().square_matrix(f).take();
      for (auto i : busy) send(i, Kind::FOperator, f_payload);
      mark("operator");
    } else {
      f = Matrix::Identity(ni, ni);
    }

    // Step 6: local fits (or the oracle columns), then the union.
    std::vector<wire::LocalSelection> selections(m);
    res.fitted_sum = Vector::Zero(ni);
    if (mode == Mode::Oracle) {
      for (auto i : busy) {
        std::vector<std::size_t> wanted;
        for (auto j : res.plan.members[i])
          if (std::find(options.oracle_set.begin(), options.oracle_set.end(), j) != options.oracle_set.end())
            wanted.push_back(j);
        std::sort(wanted.begin(), wanted.end(), [&](std::size_t a, std::size_t b) {
          return res.plan.assignment[a].local < res.plan.assignment[b].local;
        });
        send(i, Kind::RefineRequest, wire::Writer().indices(wanted).take());
      }
      for (auto i : busy) selections[i] = wire::decode_selection(expect(i, Kind::LocalSelection).payload);
    } else {
      for (auto i : busy) {
        selections[i] = wire::decode_selection(expect(i, Kind::LocalSelection).payload);
        auto fitted = expect(i, Kind::FittedValues);
        wire::Reader reader(fitted.payload);
        const Vector yhat = reader.vector();
        reader.finish();
        if (yhat.size() != ni) worker_failed(i, "fitted values have the wrong length");
        res.fitted_sum += yhat;
      }
    }
    for (auto i : busy) {
      const auto& sel = selections[i];
      WorkerSummary summary;
      summary.machine = i;
      summary.features = res.plan.members[i];
      summary.selected = sel.selected;
      summary.lambda = sel.lambda;
      summary.iterations = sel.iterations;
      summary.converged = sel.converged;
      summary.cv_error = sel.cv_error;
      res.converged = res.converged && sel.converged;
      res.per_worker.push_back(std::move(summary));
    }
    mark("local_fit");

    // Step 7: ridge on the union, assembled in global feature order.
    struct Piece {
      std::size_t feature;
      const spline::FeatureEncoder* encoder;
      Eigen::Index machine, offset, width;
    };
    std::vector<Piece> pieces;
    for (auto i : busy) {
      Eigen::Index at = 0;
      const auto& sel = selections[i];
      for (std::size_t k = 0; k < sel.selected.size(); ++k) {
        const auto w = static_cast<Eigen::Index>(sel.encoders[k].encoder.width());
        pieces.push_back({sel.selected[k], &sel.encoders[k].encoder, static_cast<Eigen::Index>(i), at, w});
        at += w;
      }
      if (at != sel.columns.cols()) worker_failed(i, "selection columns do not match the encoders");
    }
    std::sort(pieces.begin(), pieces.end(), [](const Piece& a, const Piece& b) { return a.feature < b.feature; });
    Eigen::Index width = 0;
    for (const auto& piece : pieces) width += piece.width;
    Matrix psi_selected(ni, width);
    Eigen::Index at = 0;
    for (const auto& piece : pieces) {
      psi_selected.middleCols(at, piece.width) =
          selections[static_cast<std::size_t>(piece.machine)].columns.middleCols(piece.offset, piece.width);
      res.selected.push_back(piece.feature);
      at += piece.width;
    }
    const auto ridge = ridge_refine(y, psi_selected, options.folds, derive_seed(options.seed, 7));
    res.beta_hat = ridge.beta;
    res.intercept = ridge.intercept;
    res.ridge_penalty = ridge.penalty;
    at = 0;
    for (const auto& piece : pieces) {
      res.f_hat.push_back({piece.feature, *piece.encoder, res.beta_hat.segment(at, piece.width)});
      at += piece.width;
    }
    mark("refine");
    res.timings.push_back({"total", std::chrono::duration<double>(Clock::now() - started).count()});

    if (mode != Mode::Oracle) {
      // Algorithm 2 works on centered y; the standardized fit rescales exactly.
      const auto r = inference::estimate_sigma(centered, res.y_scale * res.fitted_sum);
      eps = r.eps;
      sigma = r.sigma;
      total_width = static_cast<double>(p * res.dn);
    }
  }

  inference::TestReport test(std::size_t feature, double alpha) {
    if (result.mode == Mode::Oracle) fail(ErrorKind::InvalidArgument, "tests need a penalized fit, not oracle mode");
    if (feature >= result.p)
      fail(ErrorKind::UnknownFeature, fmt::format("feature {} outside 1..{}", feature + 1, result.p));
    const auto slot = result.plan.assignment[feature];
    const auto i = slot.machine;
    if (!open[i]) fail(ErrorKind::ConnectionLost, fmt::format("machine {} already shut down", i + 1));
    send(i, Kind::TestRequest, wire::Writer().u64(feature).take());
    const auto block = wire::decode_test_block(expect(i, Kind::TestBlock).payload);
    if (block.feature != feature || block.local != slot.local) worker_failed(i, "test block for the wrong feature");

    const Vector beta_u =
        inference::debias_block(result.y_scale * block.beta, block.psi_tilde, f, eps, total_width, n);
    const Matrix m_hat = inference::scaling_matrix(block.psi_tilde, f, sigma, total_width, n);
    auto report = inference::evaluate_statistic((m_hat * beta_u).squaredNorm(),
                                                static_cast<std::size_t>(block.beta.size()), alpha);
    report.feature = feature;
    report.machine = i;
    report.local = slot.local;
    report.sigma_hat = sigma;
    return report;
  }
};

Session::Session(const Dataset& data, const RunOptions& options) : impl_(std::make_unique<Impl>()) {
  impl_->options = options;
  try {
    impl_->fit(data);
  } catch (...) {
    impl_->shutdown_all();
    throw;
  }
}

Session::~Session() {
  if (impl_) impl_->shutdown_all();
}

const FitResult& Session::result() const { return impl_->result; }

inference::TestReport Session::test(std::size_t feature, double alpha) { return impl_->test(feature, alpha); }

std::vector<inference::TestReport> Session::test(const std::vector<std::size_t>& features, double alpha) {
  std::vector<inference::TestReport> out;
  out.reserve(features.size());
  for (auto j : features) out.push_back(test(j, alpha));
  return out;
}

void Session::close() { impl_->shutdown_all(); }

FitResult run_ddac_spam(const Dataset& data, const RunOptions& options) {
  Session session(data, options);
  session.close();
  return session.result();
}

}  // namespace ddac::runtime
