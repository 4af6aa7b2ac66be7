#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "ssmnet/corpus.hpp"
#include "ssmnet/frontend.hpp"
#include "ssmnet/ingest.hpp"

namespace ssmnet {

struct SynthConfig {
  std::string structure = "ABAB";  // one character per section
  int beats_per_section = 6;
  double beat_period = 0.5;  // seconds
  int frames_per_beat = kSubBeats;
  double sigma = 0.0;
  int template_peaks = 6;
  std::uint64_t seed = 0;
};

void validate(const SynthConfig& cfg);

struct SynthTrack {
  CqtMatrix cqt;  // 72 x (sections * beats_per_section * frames_per_beat)
  BeatGrid beats;
  SegmentAnnotation annotation;
};

/// Each distinct label gets a sparse harmonic template with its own root bin.
/// Frames are the section's template plus N(0, sigma^2) noise, clipped to [0, 1].
SynthTrack gen_track(const SynthConfig& cfg);

/// 3-6 sections over 2-4 labels, no label repeated back to back.
std::string random_structure(std::mt19937_64& rng);

/// Writes <out>/<id>.ssmf, .beats.txt, .lab per track plus <out>/manifest.json.
/// Track i uses seed + i for both its structure and its content.
std::vector<ManifestEntry> gen_corpus(std::size_t n_tracks, const SynthConfig& base, std::uint64_t seed,
                                      const std::filesystem::path& out_dir);

}  // namespace ssmnet
