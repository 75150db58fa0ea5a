#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <unistd.h>

#include <Eigen/Dense>

#include "ddac/errors.hpp"
#include "ddac/transport.hpp"

namespace testing {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("ddac_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& gen) {
  std::normal_distribution<double> d;
  Eigen::MatrixXd out(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) out(i, j) = d(gen);
  return out;
}

inline Eigen::VectorXd random_vector(Eigen::Index n, std::mt19937_64& gen) { return random_matrix(n, 1, gen); }

/// Random n x w matrix with orthonormal columns.
inline Eigen::MatrixXd random_orthonormal(Eigen::Index n, Eigen::Index w, std::mt19937_64& gen) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(random_matrix(n, w, gen));
  return qr.householderQ() * Eigen::MatrixXd::Identity(n, w);
}

/// First port of `count` consecutive ports that can all be bound right now.
inline std::uint16_t free_ports(int count) {
  static std::atomic<int> cursor{0};
  for (int attempt = 0; attempt < 200; ++attempt) {
    const int base = 30000 + (::getpid() * 37 + cursor.fetch_add(count + 1) * 11) % 25000;
    try {
      for (int i = 0; i < count; ++i) ddac::transport::Listener probe(static_cast<std::uint16_t>(base + i));
      return static_cast<std::uint16_t>(base);
    } catch (const ddac::Error&) {
    }
  }
  throw std::runtime_error("no free port range");
}

}  // namespace testing
