#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ssmnet/corpus.hpp"
#include "ssmnet/encoder.hpp"
#include "ssmnet/ssm.hpp"

namespace ssmnet {

enum class FeatureVariant { Cqt, Convnet, Ssmnet };

const char* to_string(FeatureVariant v);
FeatureVariant parse_variant(const std::string& name);  // Argument error on unknown names

// Which embedder to score. Convnet uses init_params(seed); Ssmnet needs params.
struct VariantSpec {
  FeatureVariant variant = FeatureVariant::Cqt;
  std::uint64_t seed = 0;
  std::optional<EncoderParams<float>> params;
};

/// Flattened 72 x 64 patches (4608-d), L2-normalized. An all-zero patch is a Degenerate error.
EmbeddingSequence baseline_cqt_embed(const PatchSequence& patches, const std::string& track_id = {});

EmbeddingSequence embed(const PatchSequence& patches, const VariantSpec& spec, const std::string& track_id = {});

/// Mann-Whitney AUC over the strict upper triangle with midrank ties.
/// Throws UndefinedAuc when only one class is present.
double roc_auc(const BinarySSM& truth, const SimilarityMatrix& est);

struct TrackReport {
  std::string track_id;
  FeatureVariant variant = FeatureVariant::Cqt;
  std::size_t T = 0;
  double loss = 0.0;  // per-pair mean
  double auc = 0.0;
  std::string status = "ok";

  bool ok() const { return status == "ok"; }
};

struct Quartiles {
  double q1 = 0.0, median = 0.0, q3 = 0.0;
};

/// Linear interpolation between order statistics. Empty input gives zeros.
Quartiles quartiles(std::vector<double> values);

struct CorpusReport {
  FeatureVariant variant = FeatureVariant::Cqt;
  std::uint64_t seed = 0;
  std::vector<TrackReport> rows;  // sorted by track id

  std::size_t failures() const;
  Quartiles loss_summary() const;
  Quartiles auc_summary() const;
};

TrackReport evaluate_track(const LoadedTrack& track, const VariantSpec& spec,
                           const std::optional<std::filesystem::path>& render_dir = std::nullopt);

/// Loads and scores each manifest entry. Failures become error rows.
CorpusReport evaluate_corpus(const std::vector<ManifestEntry>& entries, const VariantSpec& spec,
                             const std::optional<std::filesystem::path>& render_dir = std::nullopt);

inline constexpr const char* kReportHeader = "track_id,variant,T,loss,auc,status";

std::string report_csv(const std::vector<TrackReport>& rows);
std::string summary_json(const CorpusReport& report);

}  // namespace ssmnet
