#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ssmnet/frontend.hpp"
#include "ssmnet/ssm.hpp"

namespace ssmnet {

// One manifest row. Paths are resolved against the manifest's directory on read.
// A features file with a sidecar JSON is a patch sequence; otherwise it is a raw
// 72 x F CQT matrix and `frame_rate` is required.
struct ManifestEntry {
  std::string track_id;
  std::filesystem::path features_path;
  std::filesystem::path beats_path;
  std::filesystem::path annotation_path;
  std::optional<double> frame_rate;
  std::optional<std::string> structure;
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

// Writes paths relative to the manifest directory when they live under it.
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

struct LoadedTrack {
  std::string id;
  PatchSequence patches;
  BinarySSM truth;
};

LoadedTrack load_track(const ManifestEntry& entry);

// Loads every track; tracks that fail or have fewer than kMinBeats patches are
// collected and reported together in one Validation error naming their ids.
std::vector<LoadedTrack> load_corpus(const std::vector<ManifestEntry>& entries);

}  // namespace ssmnet
