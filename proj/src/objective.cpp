#include "ssmnet/objective.hpp"

#include <exception>
#include <memory>

namespace ssmnet {

template <typename T>
TrackObjective<T> track_objective(const EncoderParams<T>& params, const Matrix<T>& stacked, const BinarySSM& truth,
                                  const LossConfig& cfg, EncoderParams<T>* grad, T grad_scale) {
  if (stacked.cols() != kPatchCols || stacked.rows() % kCqtBins != 0) {
    fail(ErrorKind::Shape, "track_objective: stacked patches must be (T*72) x 64");
  }
  const std::size_t n = stacked.rows() / kCqtBins;
  if (truth.size() != n) {
    fail(ErrorKind::Shape, "track_objective: " + std::to_string(n) + " patches but ground truth is " +
                               std::to_string(truth.size()) + "x" + std::to_string(truth.size()));
  }

  TrackObjective<T> out;
  const bool with_grad = grad != nullptr;
  std::vector<std::unique_ptr<PatchGraph<T>>> graphs(n);
  out.embeddings = Matrix<T>(n, kEmbeddingDim);

  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
  for (long long ii = 0; ii < static_cast<long long>(n); ++ii) {
    const std::size_t i = static_cast<std::size_t>(ii);
    try {
      auto g = std::make_unique<PatchGraph<T>>();
      build_patch_graph<T>(*g, params,
                           {stacked.data() + i * kCqtBins * kPatchCols, std::size_t(kCqtBins) * kPatchCols},
                           with_grad);
      const auto& e = g->tape.value(g->embedding);
      std::copy(e.data(), e.data() + kEmbeddingDim, out.embeddings.row(i).begin());
      if (with_grad) graphs[i] = std::move(g);
    } catch (...) {
#pragma omp critical(ssmnet_objective_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);

  out.similarity = similarity_matrix(out.embeddings);
  out.loss = weighted_bce(out.similarity, truth, cfg);
  if (!with_grad) return out;

  const Matrix<double> dS = weighted_bce_grad(out.similarity, truth, cfg);
  const Matrix<T> dE = similarity_backward(out.embeddings, dS);

  auto targets = grad->tensors();
  for (std::size_t i = 0; i < n; ++i) {
    auto& g = *graphs[i];
    Tensor<T> seed(Shape{kEmbeddingDim});
    for (int k = 0; k < kEmbeddingDim; ++k) seed[k] = dE(i, k) * grad_scale;
    g.tape.backward(g.embedding, seed);
    for (std::size_t p = 0; p < targets.size(); ++p) {
      const auto& pg = g.tape.grad(g.params[p]);
      if (pg.empty()) continue;
      auto& dst = *targets[p];
      for (std::size_t k = 0; k < pg.size(); ++k) dst[k] += pg[k];
    }
    graphs[i].reset();
  }
  return out;
}

template TrackObjective<float> track_objective(const EncoderParams<float>&, const Matrix<float>&, const BinarySSM&,
                                               const LossConfig&, EncoderParams<float>*, float);
template TrackObjective<double> track_objective(const EncoderParams<double>&, const Matrix<double>&,
                                                const BinarySSM&, const LossConfig&, EncoderParams<double>*, double);

}  // namespace ssmnet
