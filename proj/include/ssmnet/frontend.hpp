#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "ssmnet/ingest.hpp"
#include "ssmnet/tensor.hpp"

namespace ssmnet {

inline constexpr int kCqtBins = 72;
inline constexpr int kSubBeats = 16;
inline constexpr int kPatchBeats = 4;
inline constexpr int kPatchCols = kSubBeats * kPatchBeats;  // 64

struct CqtConfig {
  int sample_rate = 22050;
  int hop = 512;
  double f_min = 32.70;  // C1
  int n_bins = kCqtBins;
  int bins_per_octave = 12;
  double top_db = 80.0;
};

/// 72 x F magnitude CQT in dB relative to the track maximum, floored at -top_db
/// and min-max scaled to [0, 1].
struct CqtMatrix {
  Matrix<float> values;
  double frame_rate = 0.0;

  std::size_t frames() const { return values.cols(); }
};

struct SubBeatMatrix {
  Matrix<float> values;  // 72 x 16*(B-1)
  std::size_t beats_covered = 0;
};

/// T beat-centred 72 x 64 patches stacked vertically: rows [72 i, 72 i + 72) hold patch i.
struct PatchSequence {
  Matrix<float> data;
  std::vector<double> beat_times;  // beat b_i for patch i

  std::size_t size() const { return data.rows() / kCqtBins; }
  std::span<const float> patch(std::size_t i) const {
    return {data.data() + i * kCqtBins * kPatchCols, std::size_t(kCqtBins) * kPatchCols};
  }
};

/// Center frequency of CQT bin k.
double cqt_bin_frequency(const CqtConfig& config, int k);

/// Longest per-bin analysis window, in samples at the CQT rate.
std::size_t cqt_window_length(const CqtConfig& config);

/// Integer-factor decimation to `target_rate` with a windowed-sinc low-pass.
AudioBuffer decimate(const AudioBuffer& audio, int target_rate);

CqtMatrix compute_cqt(const AudioBuffer& audio, const CqtConfig& config = {});

/// Contiguity-constrained Ward clustering of `frames` (each a vector) into
/// `clusters` runs. Returns the run lengths. Ties merge the lower-index pair.
std::vector<std::size_t> ward_partition(const std::vector<std::span<const float>>& frames, std::size_t clusters);

SubBeatMatrix subdivide_beats(const CqtMatrix& cqt, const BeatGrid& beats, int n_sub = kSubBeats);

PatchSequence assemble_patches(const SubBeatMatrix& sub, const BeatGrid& beats);

/// Persisted as SSMF (T*72) x 64 plus a sidecar JSON {"n_patches", "beat_times"}.
void write_patches(const std::filesystem::path& ssmf_path, const PatchSequence& patches);
PatchSequence read_patches(const std::filesystem::path& ssmf_path);
std::filesystem::path sidecar_path(const std::filesystem::path& ssmf_path);

}  // namespace ssmnet
