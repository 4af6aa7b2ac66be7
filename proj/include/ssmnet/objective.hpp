#pragma once

#include "ssmnet/encoder.hpp"
#include "ssmnet/loss.hpp"
#include "ssmnet/ssm.hpp"

namespace ssmnet {

template <typename T>
struct TrackObjective {
  LossValue loss;
  Matrix<T> embeddings;
  SimilarityMatrix similarity;
};

/// Loss of one track under `params`. When `grad` is non-null, adds
/// `grad_scale * dL/dtheta` into it (L under cfg.normalize). Patch graphs are
/// replayed one at a time in patch order, so the accumulation is deterministic.
template <typename T>
TrackObjective<T> track_objective(const EncoderParams<T>& params, const Matrix<T>& stacked_patches,
                                  const BinarySSM& truth, const LossConfig& cfg, EncoderParams<T>* grad,
                                  T grad_scale = T(1));

extern template TrackObjective<float> track_objective(const EncoderParams<float>&, const Matrix<float>&,
                                                      const BinarySSM&, const LossConfig&, EncoderParams<float>*,
                                                      float);
extern template TrackObjective<double> track_objective(const EncoderParams<double>&, const Matrix<double>&,
                                                       const BinarySSM&, const LossConfig&, EncoderParams<double>*,
                                                       double);

}  // namespace ssmnet
