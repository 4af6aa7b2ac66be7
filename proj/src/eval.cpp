#include "ssmnet/eval.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "ssmnet/binio.hpp"
#include "ssmnet/error.hpp"
#include "ssmnet/loss.hpp"

namespace ssmnet {
namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += (c == '\n' || c == '\r') ? ' ' : c;
  }
  return out + "\"";
}

std::vector<double> ok_values(const std::vector<TrackReport>& rows, double TrackReport::*field) {
  std::vector<double> v;
  for (const auto& r : rows)
    if (r.ok()) v.push_back(r.*field);
  return v;
}

}  // namespace

const char* to_string(FeatureVariant v) {
  switch (v) {
    case FeatureVariant::Cqt: return "cqt";
    case FeatureVariant::Convnet: return "convnet";
    case FeatureVariant::Ssmnet: return "ssmnet";
  }
  return "?";
}

FeatureVariant parse_variant(const std::string& name) {
  if (name == "cqt") return FeatureVariant::Cqt;
  if (name == "convnet") return FeatureVariant::Convnet;
  if (name == "ssmnet") return FeatureVariant::Ssmnet;
  fail(ErrorKind::Argument, "unknown variant '" + name + "' (expected cqt, convnet or ssmnet)");
}

EmbeddingSequence baseline_cqt_embed(const PatchSequence& patches, const std::string& track_id) {
  const std::size_t n = patches.size();
  const std::size_t dim = std::size_t(kCqtBins) * kPatchCols;
  EmbeddingSequence out{track_id, Matrix<float>(n, dim)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto p = patches.patch(i);
    double ss = 0.0;
    for (float x : p) ss += double(x) * double(x);
    const double norm = std::sqrt(ss);
    if (norm < 1e-12) fail(ErrorKind::Degenerate, "cqt baseline: patch " + std::to_string(i) + " is all zero");
    auto row = out.vectors.row(i);
    for (std::size_t k = 0; k < dim; ++k) row[k] = static_cast<float>(double(p[k]) / norm);
  }
  return out;
}

EmbeddingSequence embed(const PatchSequence& patches, const VariantSpec& spec, const std::string& track_id) {
  switch (spec.variant) {
    case FeatureVariant::Cqt: return baseline_cqt_embed(patches, track_id);
    case FeatureVariant::Convnet: return encode(patches, init_params(spec.seed), track_id);
    case FeatureVariant::Ssmnet:
      if (!spec.params) fail(ErrorKind::Argument, "ssmnet variant needs model parameters");
      return encode(patches, *spec.params, track_id);
  }
  fail(ErrorKind::Argument, "unknown variant");
}

double roc_auc(const BinarySSM& truth, const SimilarityMatrix& est) {
  const std::size_t n = truth.size();
  if (est.size() != n || est.values.cols() != n) fail(ErrorKind::Shape, "roc_auc: size mismatch");
  struct Scored {
    double score;
    bool positive;
  };
  std::vector<Scored> pairs;
  pairs.reserve(n * (n - (n > 0)) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) pairs.push_back({est.values(i, j), truth.values(i, j) != 0});
  std::size_t n_pos = 0;
  for (const auto& p : pairs) n_pos += p.positive;
  const std::size_t n_neg = pairs.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    fail(ErrorKind::UndefinedAuc, "roc_auc: scored pairs hold only one class (" + std::to_string(n_pos) +
                                      " positive, " + std::to_string(n_neg) + " negative)");
  }
  std::stable_sort(pairs.begin(), pairs.end(), [](const Scored& a, const Scored& b) { return a.score < b.score; });
  double pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < pairs.size();) {
    std::size_t j = i;
    while (j < pairs.size() && pairs[j].score == pairs[i].score) ++j;
    const double midrank = 0.5 * double(i + 1 + j);  // mean of ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k)
      if (pairs[k].positive) pos_rank_sum += midrank;
    i = j;
  }
  const double u = pos_rank_sum - double(n_pos) * double(n_pos + 1) / 2.0;
  return u / (double(n_pos) * double(n_neg));
}

Quartiles quartiles(std::vector<double> v) {
  if (v.empty()) return {};
  std::sort(v.begin(), v.end());
  auto at = [&](double q) {
    const double pos = q * double(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - double(lo)) * (v[hi] - v[lo]);
  };
  return {at(0.25), at(0.5), at(0.75)};
}

std::size_t CorpusReport::failures() const {
  return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const auto& r) { return !r.ok(); }));
}
Quartiles CorpusReport::loss_summary() const { return quartiles(ok_values(rows, &TrackReport::loss)); }
Quartiles CorpusReport::auc_summary() const { return quartiles(ok_values(rows, &TrackReport::auc)); }

TrackReport evaluate_track(const LoadedTrack& track, const VariantSpec& spec,
                           const std::optional<std::filesystem::path>& render_dir) {
  TrackReport r;
  r.track_id = track.id;
  r.variant = spec.variant;
  r.T = track.patches.size();
  const auto e = embed(track.patches, spec, track.id);
  const auto s = similarity_matrix(e.vectors);
  r.loss = weighted_bce(s, track.truth, LossConfig{1e-6, LossNormalization::Mean}).per_pair_mean;
  if (render_dir) {
    std::filesystem::create_directories(*render_dir);
    render_ssm_pgm(s, *render_dir / (track.id + "_" + to_string(spec.variant) + ".pgm"));
    render_ssm_pgm(track.truth, *render_dir / (track.id + "_gt.pgm"));
  }
  r.auc = roc_auc(track.truth, s);
  if (!std::isfinite(r.loss)) fail(ErrorKind::Numerical, "non-finite loss");
  return r;
}

CorpusReport evaluate_corpus(const std::vector<ManifestEntry>& entries, const VariantSpec& spec,
                             const std::optional<std::filesystem::path>& render_dir) {
  if (spec.variant == FeatureVariant::Ssmnet && !spec.params) {
    fail(ErrorKind::Argument, "ssmnet variant needs model parameters");
  }
  CorpusReport report;
  report.variant = spec.variant;
  report.seed = spec.seed;
  for (const auto& entry : entries) {
    TrackReport row;
    row.track_id = entry.track_id;
    row.variant = spec.variant;
    try {
      row = evaluate_track(load_track(entry), spec, render_dir);
    } catch (const Error& e) {
      row.status = std::string("error: ") + to_string(e.kind()) + ": " + e.what();
      row.loss = 0.0;
      row.auc = 0.0;
    }
    report.rows.push_back(std::move(row));
  }
  std::stable_sort(report.rows.begin(), report.rows.end(),
                   [](const TrackReport& a, const TrackReport& b) { return a.track_id < b.track_id; });
  return report;
}

std::string report_csv(const std::vector<TrackReport>& rows) {
  std::string out = std::string(kReportHeader) + "\n";
  for (const auto& r : rows) {
    out += csv_field(r.track_id) + "," + to_string(r.variant) + "," + std::to_string(r.T) + ",";
    if (r.ok()) {
      out += binio::format_double(r.loss) + "," + binio::format_double(r.auc);
    } else {
      out += ",";
    }
    out += "," + csv_field(r.status) + "\n";
  }
  return out;
}

std::string summary_json(const CorpusReport& report) {
  auto q = [](const Quartiles& s) { return nlohmann::json{{"q1", s.q1}, {"median", s.median}, {"q3", s.q3}}; };
  nlohmann::json j;
  j["variant"] = to_string(report.variant);
  j["n_tracks"] = report.rows.size();
  j["n_failed"] = report.failures();
  j["loss"] = q(report.loss_summary());
  j["auc"] = q(report.auc_summary());
  j["loss_normalization"] = "per-pair mean (sum / T^2)";
  j["scored_pairs"] = "strict upper triangle (diagonal and mirrored pairs excluded)";
  j["quantiles"] = "linear interpolation between order statistics";
  if (report.variant == FeatureVariant::Convnet) j["seed"] = report.seed;
  return j.dump(2) + "\n";
}

}  // namespace ssmnet
