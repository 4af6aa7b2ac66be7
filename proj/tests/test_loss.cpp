#include <doctest.h>

#include <cmath>

#include "ssmnet/diffcore.hpp"
#include "ssmnet/error.hpp"
#include "ssmnet/loss.hpp"
#include "support.hpp"

using namespace ssmnet;

namespace {

BinarySSM truth_from(std::vector<std::uint8_t> v, std::size_t n, double lambda) {
  BinarySSM s;
  s.values = Matrix<std::uint8_t>(n, n, std::move(v));
  s.lambda = s.lambda_raw = lambda;
  return s;
}

// Direct double loop over the weighted BCE definition.
double oracle(const Matrix<double>& p, const BinarySSM& s, double eps) {
  double total = 0.0;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    for (std::size_t j = 0; j < p.cols(); ++j) {
      const double q = std::min(std::max(p(i, j), eps), 1.0 - eps);
      const double y = s.values(i, j);
      total -= (1.0 - s.lambda) * y * std::log(q) + s.lambda * (1.0 - y) * std::log(1.0 - q);
    }
  }
  return total;
}

}  // namespace

TEST_CASE("loss: uniform one-half prediction") {
  const auto s = truth_from({1, 0, 0, 1}, 2, 0.5);
  const SimilarityMatrix p{Matrix<double>(2, 2, 0.5)};
  const auto v = weighted_bce(p, s);
  CHECK(v.total == doctest::Approx(4 * 0.5 * std::log(2.0)).epsilon(1e-12));
  CHECK(v.total == doctest::Approx(1.3863).epsilon(1e-4));
  CHECK(v.per_pair_mean == doctest::Approx(v.total / 4.0));
  CHECK(v.lambda_used == 0.5);

  const auto g = weighted_bce_grad(p, s);
  CHECK(g(0, 0) == doctest::Approx(-1.0));
  CHECK(g(0, 1) == doctest::Approx(1.0));
}

TEST_CASE("loss: perfect prediction is epsilon-small") {
  const auto s = truth_from({1, 0, 0, 1}, 2, 0.5);
  Matrix<double> p(2, 2, std::vector<double>{1, 0, 0, 1});
  const auto v = weighted_bce(SimilarityMatrix{p}, s);
  CHECK(v.total < 4 * 1e-5);
  CHECK(v.total > 0.0);
}

TEST_CASE("loss: matches the direct oracle on random 8x8 instances") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::uint8_t> y(64);
    for (auto& v : y) v = rng() % 2;
    const double lambda = 0.05 + 0.9 * u(rng);
    const auto s = truth_from(y, 8, lambda);
    Matrix<double> p(8, 8);
    for (auto& v : p.storage()) v = u(rng);
    p(0, 0) = 0.0;  // clip path
    p(1, 1) = 1.0;
    const double want = oracle(p, s, 1e-6);
    const auto got = weighted_bce(SimilarityMatrix{p}, s);
    REQUIRE(std::abs(got.total - want) <= 1e-10 * std::max(1.0, std::abs(want)));
    const auto mean = weighted_bce(SimilarityMatrix{p}, s, LossConfig{1e-6, LossNormalization::Mean});
    REQUIRE(mean.total == doctest::Approx(want / 64.0).epsilon(1e-12));
  }
}

TEST_CASE("loss: lambda one-half factors to half the plain BCE") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  std::vector<std::uint8_t> y(36);
  for (auto& v : y) v = rng() % 2;
  const auto s = truth_from(y, 6, 0.5);
  Matrix<double> p(6, 6);
  for (auto& v : p.storage()) v = u(rng);
  double bce = 0.0;
  for (std::size_t k = 0; k < 36; ++k) bce -= y[k] ? std::log(p.storage()[k]) : std::log(1.0 - p.storage()[k]);
  CHECK(weighted_bce(SimilarityMatrix{p}, s).total == doctest::Approx(0.5 * bce).epsilon(1e-14));
}

TEST_CASE("loss: gradient matches central differences") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  std::vector<std::uint8_t> y(16);
  for (auto& v : y) v = rng() % 2;
  const auto s = truth_from(y, 4, 0.3);
  std::vector<double> x(16);
  for (auto& v : x) v = u(rng);
  for (auto norm : {LossNormalization::Sum, LossNormalization::Mean}) {
    const LossConfig cfg{1e-6, norm};
    auto f = [&](std::span<const double> v) {
      return weighted_bce(SimilarityMatrix{Matrix<double>(4, 4, {v.begin(), v.end()})}, s, cfg).total;
    };
    auto g = [&](std::span<const double> v) {
      return weighted_bce_grad(SimilarityMatrix{Matrix<double>(4, 4, {v.begin(), v.end()})}, s, cfg).storage();
    };
    GradcheckOptions opts;
    opts.tolerance = 1e-6;
    CHECK(gradcheck(f, g, x, opts).passed);
  }
}

TEST_CASE("loss: clipped entries have zero gradient") {
  const auto s = truth_from({1, 0, 0, 1}, 2, 0.5);
  const auto g = weighted_bce_grad(SimilarityMatrix{Matrix<double>(2, 2, std::vector<double>{1, 0, 0.5, 1})}, s);
  CHECK(g(0, 0) == 0.0);
  CHECK(g(0, 1) == 0.0);
  CHECK(g(1, 0) != 0.0);
}

TEST_CASE("loss: config and shape validation") {
  const auto s = truth_from({1, 0, 0, 1}, 2, 0.5);
  const SimilarityMatrix p{Matrix<double>(2, 2, 0.5)};
  CHECK_THROWS_AS(weighted_bce(p, s, LossConfig{0.0}), Error);
  CHECK_THROWS_AS(weighted_bce(p, s, LossConfig{0.5}), Error);
  CHECK_THROWS_AS(weighted_bce(SimilarityMatrix{Matrix<double>(3, 3, 0.5)}, s), Error);
}
