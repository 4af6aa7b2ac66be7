#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "ssmnet/log.hpp"
#include "ssmnet/tensor.hpp"

namespace ssmnet::test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / ("ssmnet_" + tag + "_" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Collects log lines while alive; restores the previous sink afterwards.
class LogCapture {
 public:
  LogCapture() {
    previous_ = set_log_sink([this](LogLevel level, const std::string& msg) {
      (level == LogLevel::Warning ? warnings : infos).push_back(msg);
    });
  }
  ~LogCapture() { set_log_sink(previous_); }

  std::vector<std::string> infos;
  std::vector<std::string> warnings;

 private:
  LogSink previous_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

template <typename T>
Matrix<T> random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Matrix<T> m(rows, cols);
  for (auto& v : m.storage()) v = static_cast<T>(d(rng));
  return m;
}

}  // namespace ssmnet::test
