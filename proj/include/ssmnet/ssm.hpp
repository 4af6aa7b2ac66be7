#pragma once

#include <cstdint>
#include <filesystem>

#include "ssmnet/ingest.hpp"
#include "ssmnet/tensor.hpp"

namespace ssmnet {

/// Estimated SSM, entries in [0, 1], symmetric with unit diagonal.
struct SimilarityMatrix {
  Matrix<double> values;

  std::size_t size() const { return values.rows(); }
};

/// Ground-truth SSM: S_ij = 1 iff beats i and j map to segments with the same label.
struct BinarySSM {
  Matrix<std::uint8_t> values;
  double lambda = 0.5;      // positive rate, clamped to [kLambdaMin, kLambdaMax]
  double lambda_raw = 0.5;  // sum(S) / T^2
  bool degenerate = false;  // every beat carries the same label

  std::size_t size() const { return values.rows(); }
};

inline constexpr double kLambdaMin = 0.05;
inline constexpr double kLambdaMax = 0.95;
inline constexpr double kUnitNormTolerance = 1e-4;

/// S_ij = 1 - |e_i - e_j|^2 / 4 over unit-norm rows. Rounding excursions are clipped to [0, 1].
template <typename T>
SimilarityMatrix similarity_matrix(const Matrix<T>& embeddings);

/// dL/de from dL/dS through S_ij = 1 - |e_i - e_j|^2 / 4 (unclipped formula).
template <typename T>
Matrix<T> similarity_backward(const Matrix<T>& embeddings, const Matrix<double>& grad_similarity);

/// Index of the segment a time maps to: the one containing it ([start, end)),
/// otherwise the nearest by boundary distance (earlier segment on ties).
std::size_t segment_of(const SegmentAnnotation& ann, double time);

BinarySSM ground_truth_ssm(const SegmentAnnotation& ann, const BeatGrid& beats);
BinarySSM ground_truth_ssm(const SegmentAnnotation& ann, const std::vector<double>& beat_times);

/// Binary PGM ("P5", maxval 255), pixel = round(255 * S_ij) with halves rounded up.
std::vector<std::uint8_t> encode_pgm(const Matrix<double>& values);
void render_ssm_pgm(const SimilarityMatrix& s, const std::filesystem::path& path);
void render_ssm_pgm(const BinarySSM& s, const std::filesystem::path& path);
/// Pixels of a P5 image, row-major.
Matrix<std::uint8_t> read_pgm(const std::filesystem::path& path);

}  // namespace ssmnet
