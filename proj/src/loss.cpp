#include "ssmnet/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ssmnet/error.hpp"

namespace ssmnet {
namespace {

void check_sizes(const SimilarityMatrix& est, const BinarySSM& gt) {
  if (est.size() != gt.size() || est.values.cols() != gt.values.cols()) {
    fail(ErrorKind::Shape, "weighted_bce: estimate is " + std::to_string(est.size()) + "x" +
                               std::to_string(est.values.cols()) + ", ground truth is " + std::to_string(gt.size()) +
                               "x" + std::to_string(gt.values.cols()));
  }
}

}  // namespace

void validate(const LossConfig& cfg) {
  if (!(cfg.epsilon_clip > 0.0 && cfg.epsilon_clip < 0.5)) {
    fail(ErrorKind::Config, "loss epsilon_clip must lie in (0, 0.5)");
  }
}

LossValue weighted_bce(const SimilarityMatrix& est, const BinarySSM& gt, const LossConfig& cfg) {
  validate(cfg);
  check_sizes(est, gt);
  const double eps = cfg.epsilon_clip;
  const double lambda = gt.lambda;
  const auto& s = est.values.storage();
  const auto& y = gt.values.storage();
  double total = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    const double p = std::clamp(s[k], eps, 1.0 - eps);
    if (y[k]) {
      total -= (1.0 - lambda) * std::log(p);
    } else {
      total -= lambda * std::log(1.0 - p);
    }
  }
  const double pairs = double(s.size());
  LossValue out;
  out.per_pair_mean = pairs > 0 ? total / pairs : 0.0;
  out.total = cfg.normalize == LossNormalization::Mean ? out.per_pair_mean : total;
  out.lambda_used = lambda;
  return out;
}

Matrix<double> weighted_bce_grad(const SimilarityMatrix& est, const BinarySSM& gt, const LossConfig& cfg) {
  validate(cfg);
  check_sizes(est, gt);
  const double eps = cfg.epsilon_clip;
  const double lambda = gt.lambda;
  const std::size_t n = est.size();
  const double scale = cfg.normalize == LossNormalization::Mean && n > 0 ? 1.0 / (double(n) * double(n)) : 1.0;
  Matrix<double> g(n, est.values.cols());
  const auto& s = est.values.storage();
  const auto& y = gt.values.storage();
  for (std::size_t k = 0; k < s.size(); ++k) {
    const double p = s[k];
    if (p <= eps || p >= 1.0 - eps) continue;
    g.storage()[k] = scale * (y[k] ? -(1.0 - lambda) / p : lambda / (1.0 - p));
  }
  return g;
}

}  // namespace ssmnet
