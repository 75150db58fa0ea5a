#include <algorithm>
#include <atomic>

#include <fmt/format.h>

#include "ddac/decorrelate.hpp"
#include "ddac/grouplasso.hpp"
#include "ddac/log.hpp"
#include "ddac/runtime.hpp"

namespace ddac::runtime {

namespace {

using wire::Kind;
using wire::Message;

// Everything a worker holds between messages.
class WorkerState {
 public:
  explicit WorkerState(transport::Channel& channel, std::chrono::milliseconds timeout)
      : channel_(channel), timeout_(timeout) {}

  void run() {
    auto first = channel_.receive(timeout_);
    if (first.kind == Kind::Shutdown) return;  // idle machine
    if (first.kind != Kind::AssignFeatures)
      fail(ErrorKind::ProtocolError, fmt::format("expected AssignFeatures, got {}", wire::to_string(first.kind)));
    assign_ = wire::decode_assign(first.payload);
    id_ = assign_.machine;
    build_design();

    switch (assign_.phase) {
      case wire::Phase::Decorrelate: {
        send(Kind::GramContribution, wire::Writer().square_matrix(decorrelate::local_gram(psi_, n())).take());
        auto msg = expect(Kind::FOperator);
        wire::Reader reader(msg.payload);
        f_ = reader.square_matrix();
        reader.finish();
        if (f_.rows() != n()) fail(ErrorKind::ShapeMismatch, "operator size does not match the sample size");
        psi_tilde_ = f_ * psi_;
        y_tilde_ = f_ * assign_.y;
        local_fit();
        break;
      }
      case wire::Phase::Direct:
        psi_tilde_ = psi_;
        y_tilde_ = assign_.y;
        local_fit();
        break;
      case wire::Phase::Oracle:
        break;
    }
    serve_requests();
  }

  std::uint32_t id() const { return id_; }

 private:
  Eigen::Index n() const { return assign_.x.rows(); }

  void send(Kind kind, wire::Bytes payload) { channel_.send(Message{kind, id_, std::move(payload)}); }

  Message expect(Kind kind) {
    auto msg = channel_.receive(timeout_);
    if (msg.kind == Kind::Shutdown) throw ShutdownSignal{};
    if (msg.kind != kind)
      fail(ErrorKind::ProtocolError, fmt::format("expected {}, got {}", wire::to_string(kind), wire::to_string(msg.kind)));
    return msg;
  }

  void build_design() {
    const auto pi = assign_.features.size();
    if (static_cast<std::size_t>(assign_.x.cols()) != pi || assign_.y.size() != n())
      fail(ErrorKind::ShapeMismatch, "assignment shapes are inconsistent");
    designs_.reserve(pi);
    Eigen::Index total = 0;
    for (std::size_t k = 0; k < pi; ++k) {
      designs_.push_back(spline::make_feature_design(assign_.x.col(static_cast<Eigen::Index>(k)), assign_.dn,
                                                     assign_.features[k]));
      offsets_.push_back(total);
      widths_.push_back(designs_.back().standardized.cols());
      total += widths_.back();
    }
    psi_.resize(n(), total);
    for (std::size_t k = 0; k < pi; ++k) psi_.middleCols(offsets_[k], widths_[k]) = designs_[k].standardized;
  }

  void local_fit() {
    const auto blocks = grouplasso::qr_blocks(psi_tilde_, widths_);
    const auto fit = grouplasso::fit_cv(y_tilde_, blocks, assign_.folds, assign_.cv_seed, {}, assign_.path_length,
                                           assign_.cv_rule);
    beta_ = grouplasso::back_solve(blocks, fit.theta);
    fitted_ = psi_ * beta_;

    wire::LocalSelection sel;
    sel.lambda = fit.lambda;
    sel.iterations = fit.iterations;
    sel.converged = fit.converged;
    if (!fit.cv_errors.empty()) sel.cv_error = *std::min_element(fit.cv_errors.begin(), fit.cv_errors.end());
    fill_selection(sel, fit.active);
    log(LogLevel::Debug, fmt::format("worker {}: lambda={:.4g} selected {} of {} features", id_, fit.lambda,
                                     sel.selected.size(), designs_.size()));
    send(Kind::LocalSelection, wire::encode(sel));
    send(Kind::FittedValues, wire::Writer().vector(fitted_).take());
    fitted_ready_ = true;
  }

  void fill_selection(wire::LocalSelection& sel, const std::vector<std::size_t>& locals) {
    Eigen::Index width = 0;
    for (auto k : locals) width += widths_[k];
    sel.columns.resize(n(), width);
    Eigen::Index at = 0;
    for (auto k : locals) {
      sel.selected.push_back(assign_.features[k]);
      sel.encoders.push_back({assign_.features[k], designs_[k].encoder});
      sel.columns.middleCols(at, widths_[k]) = designs_[k].standardized;
      at += widths_[k];
    }
  }

  std::size_t local_index(std::size_t feature) const {
    const auto it = std::find(assign_.features.begin(), assign_.features.end(), feature);
    if (it == assign_.features.end())
      fail(ErrorKind::UnknownFeature, fmt::format("feature {} is not held by machine {}", feature + 1, id_));
    return static_cast<std::size_t>(it - assign_.features.begin());
  }

  void serve_requests() {
    while (true) {
      auto msg = channel_.receive(timeout_);
      switch (msg.kind) {
        case Kind::Shutdown:
          return;
        case Kind::RefineRequest: {
          wire::Reader reader(msg.payload);
          const auto wanted = reader.indices();
          reader.finish();
          std::vector<std::size_t> locals;
          for (auto j : wanted) locals.push_back(local_index(j));
          wire::LocalSelection sel;
          fill_selection(sel, locals);
          send(Kind::LocalSelection, wire::encode(sel));
          break;
        }
        case Kind::TestRequest: {
          if (!fitted_ready_) fail(ErrorKind::ProtocolError, "no local fit to test against");
          wire::Reader reader(msg.payload);
          const auto feature = reader.u64();
          reader.finish();
          const auto k = local_index(feature);
          wire::TestBlock block;
          block.feature = feature;
          block.local = k;
          block.beta = beta_.segment(offsets_[k], widths_[k]);
          block.psi_tilde = psi_tilde_.middleCols(offsets_[k], widths_[k]);
          send(Kind::TestBlock, wire::encode(block));
          break;
        }
        default:
          fail(ErrorKind::ProtocolError, fmt::format("unexpected {}", wire::to_string(msg.kind)));
      }
    }
  }

 public:
  struct ShutdownSignal {};

 private:
  transport::Channel& channel_;
  std::chrono::milliseconds timeout_;
  std::uint32_t id_ = 0;
  wire::AssignFeatures assign_;
  std::vector<spline::FeatureDesign> designs_;
  std::vector<Eigen::Index> offsets_, widths_;
  Matrix psi_, psi_tilde_, f_;
  Vector y_tilde_, beta_, fitted_;
  bool fitted_ready_ = false;
};

}  // namespace

void run_worker(transport::Channel& channel, std::chrono::milliseconds timeout) {
  WorkerState state(channel, timeout);
  try {
    state.run();
  } catch (const WorkerState::ShutdownSignal&) {
  } catch (const Error& e) {
    log(LogLevel::Info, fmt::format("worker {}: {}", state.id(), e.what()));
    // The link itself may be gone; nothing more to do then.
    if (e.kind() != ErrorKind::ConnectionLost && e.kind() != ErrorKind::Timeout) {
      try {
        channel.send(Message{Kind::Error, state.id(),
                             wire::encode(wire::ErrorReport{static_cast<std::uint64_t>(e.kind()), e.what()})});
      } catch (const Error&) {
      }
    }
  } catch (const std::exception& e) {
    try {
      channel.send(Message{Kind::Error, state.id(),
                           wire::encode(wire::ErrorReport{static_cast<std::uint64_t>(ErrorKind::WorkerFailure), e.what()})});
    } catch (const Error&) {
    }
  }
  channel.close();
}

void serve_worker(std::uint16_t port, bool persistent, std::chrono::milliseconds timeout) {
  transport::Listener listener(port);
  log(LogLevel::Info, fmt::format("worker listening on 127.0.0.1:{}", listener.port()));
  do {
    std::unique_ptr<transport::Channel> channel;
    try {
      channel = listener.accept(timeout);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::Timeout) return;  // idle: clean exit
      throw;
    }
    run_worker(*channel, timeout);
  } while (persistent);
}

LocalWorkerPool::LocalWorkerPool(std::size_t m, std::uint16_t base_port, std::chrono::milliseconds timeout) {
  std::vector<std::unique_ptr<transport::Listener>> listeners;
  for (std::size_t i = 0; i < m; ++i)
    listeners.push_back(std::make_unique<transport::Listener>(static_cast<std::uint16_t>(base_port + i)));
  for (auto& l : listeners) {
    threads_.emplace_back([listener = std::move(l), timeout] {
      try {
        auto channel = listener->accept(timeout);
        run_worker(*channel, timeout);
      } catch (const std::exception& e) {
        log(LogLevel::Info, fmt::format("local worker: {}", e.what()));
      }
    });
  }
}

LocalWorkerPool::~LocalWorkerPool() { join(); }

void LocalWorkerPool::join() {
  for (auto& t : threads_)
    if (t.joinable()) t.join();
}

}  // namespace ddac::runtime
