#pragma once

#include "ssmnet/ssm.hpp"

namespace ssmnet {

enum class LossNormalization { Sum, Mean };

struct LossConfig {
  double epsilon_clip = 1e-6;
  LossNormalization normalize = LossNormalization::Sum;
};

struct LossValue {
  double total = 0.0;          // under the configured normalization
  double per_pair_mean = 0.0;  // sum / T^2
  double lambda_used = 0.0;
};

void validate(const LossConfig& cfg);

/// L = -sum_ij (1 - lambda) S log(S^) + lambda (1 - S) log(1 - S^), with S^ clipped
/// to [eps, 1 - eps] first and lambda the ground truth's (clamped) positive rate.
LossValue weighted_bce(const SimilarityMatrix& est, const BinarySSM& gt, const LossConfig& cfg = {});

/// dL/dS^; zero where the clip is active.
Matrix<double> weighted_bce_grad(const SimilarityMatrix& est, const BinarySSM& gt, const LossConfig& cfg = {});

}  // namespace ssmnet
