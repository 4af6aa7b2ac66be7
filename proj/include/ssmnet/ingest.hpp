#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ssmnet/tensor.hpp"

namespace ssmnet {

// Mono audio in [-1, 1].
struct AudioBuffer {
  std::vector<float> samples;
  int sample_rate = 0;

  double duration() const { return sample_rate > 0 ? double(samples.size()) / sample_rate : 0.0; }
};

enum class BeatSource { File, UniformFallback };

struct BeatGrid {
  std::vector<double> beat_times;  // seconds, strictly increasing
  BeatSource source = BeatSource::File;

  std::size_t size() const { return beat_times.size(); }
};

inline constexpr std::size_t kMinBeats = 5;

struct Segment {
  double start = 0.0;
  double end = 0.0;
  std::string label;

  bool operator==(const Segment&) const = default;
};

struct SegmentAnnotation {
  std::vector<Segment> segments;  // sorted by start, non-overlapping, half-open [start, end)
};

/// Reads a RIFF/WAVE file holding 16-bit PCM or 32-bit IEEE float samples.
/// Channels are averaged into one; 16-bit values map as v / 32768.
AudioBuffer read_wav(const std::filesystem::path& path);

/// Writes mono 16-bit PCM (samples are clamped, scaled by 32768 and rounded).
void write_wav_pcm16(const std::filesystem::path& path, const std::vector<float>& samples, int sample_rate,
                     int channels = 1);
void write_wav_float(const std::filesystem::path& path, const std::vector<float>& samples, int sample_rate);

BeatGrid parse_beats(const std::string& text);
BeatGrid read_beats(const std::filesystem::path& path);
void write_beats(const std::filesystem::path& path, const BeatGrid& beats);
void validate_beats(const BeatGrid& beats);

/// Beats at period, 2*period, ... strictly before `duration`.
BeatGrid uniform_beats(double duration, double period);

std::string normalize_label(const std::string& label);

SegmentAnnotation parse_annotation(const std::string& text);
SegmentAnnotation read_annotation(const std::filesystem::path& path);
void write_annotation(const std::filesystem::path& path, const SegmentAnnotation& ann);

// SSMF: "SSMF", u32 version=1, u32 rows, u32 cols, rows*cols float32 LE row-major.
inline constexpr std::uint32_t kSsmfVersion = 1;

Matrix<float> read_feature_matrix(const std::filesystem::path& path);
Matrix<float> decode_feature_matrix(std::span<const std::uint8_t> bytes, const std::string& context = "SSMF");
void write_feature_matrix(const std::filesystem::path& path, const Matrix<float>& m);
std::vector<std::uint8_t> encode_feature_matrix(const Matrix<float>& m);

}  // namespace ssmnet
