#include "ssmnet/ssm.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ssmnet/binio.hpp"
#include "ssmnet/error.hpp"
#include "ssmnet/log.hpp"

namespace ssmnet {

template <typename T>
SimilarityMatrix similarity_matrix(const Matrix<T>& e) {
  const std::size_t n = e.rows(), d = e.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double ss = 0.0;
    for (std::size_t k = 0; k < d; ++k) ss += double(e(i, k)) * double(e(i, k));
    if (std::abs(std::sqrt(ss) - 1.0) > kUnitNormTolerance) {
      fail(ErrorKind::Domain, "similarity_matrix: embedding " + std::to_string(i) + " has norm " +
                                  binio::format_double(std::sqrt(ss)) + ", expected 1");
    }
  }
  SimilarityMatrix s{Matrix<double>(n, n)};
#pragma omp parallel for schedule(static)
  for (long long ii = 0; ii < static_cast<long long>(n); ++ii) {
    const std::size_t i = static_cast<std::size_t>(ii);
    for (std::size_t j = 0; j < n; ++j) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = double(e(i, k)) - double(e(j, k));
        d2 += diff * diff;
      }
      s.values(i, j) = std::clamp(1.0 - 0.25 * d2, 0.0, 1.0);
    }
  }
  return s;
}

template <typename T>
Matrix<T> similarity_backward(const Matrix<T>& e, const Matrix<double>& g) {
  const std::size_t n = e.rows(), d = e.cols();
  if (g.rows() != n || g.cols() != n) fail(ErrorKind::Shape, "similarity_backward: gradient is not T x T");
  Matrix<T> out(n, d);
#pragma omp parallel for schedule(static)
  for (long long ii = 0; ii < static_cast<long long>(n); ++ii) {
    const std::size_t i = static_cast<std::size_t>(ii);
    std::vector<double> acc(d, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      // S_ij and S_ji both depend on e_i with d/de_i = -(e_i - e_j) / 2.
      const double w = -0.5 * (g(i, j) + g(j, i));
      if (w == 0.0) continue;
      for (std::size_t k = 0; k < d; ++k) acc[k] += w * (double(e(i, k)) - double(e(j, k)));
    }
    for (std::size_t k = 0; k < d; ++k) out(i, k) = static_cast<T>(acc[k]);
  }
  return out;
}

template SimilarityMatrix similarity_matrix(const Matrix<float>&);
template SimilarityMatrix similarity_matrix(const Matrix<double>&);
template Matrix<float> similarity_backward(const Matrix<float>&, const Matrix<double>&);
template Matrix<double> similarity_backward(const Matrix<double>&, const Matrix<double>&);

std::size_t segment_of(const SegmentAnnotation& ann, double t) {
  const auto& segs = ann.segments;
  if (segs.empty()) fail(ErrorKind::EmptyInput, "segment_of: empty annotation");
  std::size_t best = 0;
  double best_dist = INFINITY;
  for (std::size_t k = 0; k < segs.size(); ++k) {
    if (segs[k].start <= t && t < segs[k].end) return k;
    const double dist = t < segs[k].start ? segs[k].start - t : t - segs[k].end;
    if (dist < best_dist) {
      best_dist = dist;
      best = k;
    }
  }
  return best;
}

BinarySSM ground_truth_ssm(const SegmentAnnotation& ann, const std::vector<double>& beat_times) {
  if (ann.segments.empty()) fail(ErrorKind::EmptyInput, "ground_truth_ssm: empty annotation");
  const std::size_t n = beat_times.size();
  if (n == 0) fail(ErrorKind::EmptyInput, "ground_truth_ssm: no beats");
  std::vector<const std::string*> label(n);
  for (std::size_t i = 0; i < n; ++i) label[i] = &ann.segments[segment_of(ann, beat_times[i])].label;

  BinarySSM s;
  s.values = Matrix<std::uint8_t>(n, n);
  std::size_t ones = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const bool same = *label[i] == *label[j];
      s.values(i, j) = same ? 1 : 0;
      ones += same;
    }
  }
  s.lambda_raw = double(ones) / (double(n) * double(n));
  s.lambda = std::clamp(s.lambda_raw, kLambdaMin, kLambdaMax);
  s.degenerate = ones == n * n;
  if (s.degenerate) {
    log_warning("ground truth: every beat carries label '" + *label[0] + "'; lambda clamped to " +
                binio::format_double(s.lambda));
  }
  return s;
}

BinarySSM ground_truth_ssm(const SegmentAnnotation& ann, const BeatGrid& beats) {
  return ground_truth_ssm(ann, beats.beat_times);
}

std::vector<std::uint8_t> encode_pgm(const Matrix<double>& v) {
  binio::Writer w;
  w.raw("P5\n" + std::to_string(v.cols()) + " " + std::to_string(v.rows()) + "\n255\n");
  for (double x : v.storage()) {
    const double p = std::floor(255.0 * std::clamp(x, 0.0, 1.0) + 0.5);
    w.bytes().push_back(static_cast<std::uint8_t>(p));
  }
  return w.take();
}

void render_ssm_pgm(const SimilarityMatrix& s, const std::filesystem::path& path) {
  binio::write_file_atomic(path, encode_pgm(s.values));
}

void render_ssm_pgm(const BinarySSM& s, const std::filesystem::path& path) {
  Matrix<double> v(s.size(), s.size());
  for (std::size_t i = 0; i < v.size(); ++i) v.storage()[i] = s.values.storage()[i];
  binio::write_file_atomic(path, encode_pgm(v));
}

Matrix<std::uint8_t> read_pgm(const std::filesystem::path& path) {
  const auto bytes = binio::read_file(path);
  std::size_t pos = 0;
  auto token = [&]() {
    for (;;) {
      while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t += static_cast<char>(bytes[pos++]);
    return t;
  };
  const std::string ctx = path.string();
  if (token() != "P5") fail(ErrorKind::Format, ctx + ": not a binary PGM");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(token());
    h = std::stoul(token());
    maxval = std::stoul(token());
  } catch (const std::exception&) {
    fail(ErrorKind::Format, ctx + ": bad PGM header");
  }
  if (maxval != 255) fail(ErrorKind::Unsupported, ctx + ": only maxval 255 is supported");
  ++pos;  // single whitespace after maxval
  if (bytes.size() < pos || bytes.size() - pos != w * h) fail(ErrorKind::Length, ctx + ": pixel data size mismatch");
  return Matrix<std::uint8_t>(h, w, std::vector<std::uint8_t>(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end()));
}

}  // namespace ssmnet
