#include "ssmnet/corpus.hpp"

#include <json.hpp>

#include "ssmnet/binio.hpp"
#include "ssmnet/error.hpp"

namespace ssmnet {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::string relative_to(const fs::path& base, const fs::path& p) {
  if (base.empty()) return p.generic_string();
  const auto rel = p.lexically_relative(base);
  if (rel.empty() || *rel.begin() == "..") return p.generic_string();
  return rel.generic_string();
}

}  // namespace

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  const auto bytes = binio::read_file(path);
  const fs::path base = path.parent_path();
  std::vector<ManifestEntry> out;
  try {
    const json doc = json::parse(bytes.begin(), bytes.end());
    if (!doc.is_array()) fail(ErrorKind::Format, path.string() + ": manifest must be a JSON array");
    for (const auto& row : doc) {
      ManifestEntry e;
      e.track_id = row.at("track_id").get<std::string>();
      e.features_path = resolve(base, row.at("features_path").get<std::string>());
      e.beats_path = resolve(base, row.at("beats_path").get<std::string>());
      e.annotation_path = resolve(base, row.at("annotation_path").get<std::string>());
      if (row.contains("frame_rate")) e.frame_rate = row.at("frame_rate").get<double>();
      if (row.contains("structure")) e.structure = row.at("structure").get<std::string>();
      if (e.track_id.empty()) fail(ErrorKind::Format, path.string() + ": empty track_id");
      out.push_back(std::move(e));
    }
  } catch (const json::exception& ex) {
    fail(ErrorKind::Format, path.string() + ": " + ex.what());
  }
  return out;
}

void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries) {
  const fs::path base = path.parent_path();
  json doc = json::array();
  for (const auto& e : entries) {
    json row;
    row["track_id"] = e.track_id;
    row["features_path"] = relative_to(base, e.features_path);
    row["beats_path"] = relative_to(base, e.beats_path);
    row["annotation_path"] = relative_to(base, e.annotation_path);
    if (e.frame_rate) row["frame_rate"] = *e.frame_rate;
    if (e.structure) row["structure"] = *e.structure;
    doc.push_back(std::move(row));
  }
  binio::write_file_atomic(path, doc.dump(2) + "\n");
}

LoadedTrack load_track(const ManifestEntry& entry) {
  LoadedTrack t;
  t.id = entry.track_id;
  const BeatGrid beats = read_beats(entry.beats_path);
  const SegmentAnnotation ann = read_annotation(entry.annotation_path);
  if (fs::exists(sidecar_path(entry.features_path))) {
    t.patches = read_patches(entry.features_path);
  } else {
    if (!entry.frame_rate || !(*entry.frame_rate > 0.0)) {
      fail(ErrorKind::Validation, "raw CQT features need a positive frame_rate in the manifest");
    }
    CqtMatrix cqt{read_feature_matrix(entry.features_path), *entry.frame_rate};
    if (cqt.values.rows() != std::size_t(kCqtBins)) {
      fail(ErrorKind::Shape, entry.features_path.string() + ": expected 72 rows, got " +
                                 std::to_string(cqt.values.rows()));
    }
    t.patches = assemble_patches(subdivide_beats(cqt, beats), beats);
  }
  if (t.patches.size() < kMinBeats) {
    fail(ErrorKind::TooShort, std::to_string(t.patches.size()) + " patches (need at least " +
                                  std::to_string(kMinBeats) + ")");
  }
  t.truth = ground_truth_ssm(ann, t.patches.beat_times);
  return t;
}

std::vector<LoadedTrack> load_corpus(const std::vector<ManifestEntry>& entries) {
  std::vector<LoadedTrack> out;
  std::string problems;
  for (const auto& e : entries) {
    try {
      out.push_back(load_track(e));
    } catch (const Error& err) {
      problems += "\n  " + e.track_id + ": " + err.what();
    }
  }
  if (!problems.empty()) fail(ErrorKind::Validation, "rejected tracks:" + problems);
  return out;
}

}  // namespace ssmnet
