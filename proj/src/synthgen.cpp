#include "ssmnet/synthgen.hpp"

#include <algorithm>
#include <set>

#include "ssmnet/error.hpp"

namespace ssmnet {
namespace {

// Semitone offsets of the first harmonics: 1, 2, 3, 4, 5, 6, 7, 8.
constexpr int kHarmonicOffsets[] = {0, 12, 19, 24, 28, 31, 34, 36};
constexpr int kRootSpan = 30;

std::vector<float> make_template(int root, int peaks, std::mt19937_64& rng) {
  std::vector<float> t(kCqtBins, 0.0f);
  std::uniform_real_distribution<double> amp(0.6, 1.0);
  const int n = std::min<int>(peaks, int(std::size(kHarmonicOffsets)));
  for (int h = 0; h < n; ++h) {
    const int bin = root + kHarmonicOffsets[h];
    const double a = amp(rng) / (1.0 + 0.25 * h);
    if (bin < kCqtBins) t[bin] = std::max(t[bin], float(a));
    if (bin + 1 < kCqtBins) t[bin + 1] = std::max(t[bin + 1], float(0.3 * a));
    if (bin >= 1 && bin - 1 < kCqtBins) t[bin - 1] = std::max(t[bin - 1], float(0.3 * a));
  }
  return t;
}

}  // namespace

void validate(const SynthConfig& cfg) {
  if (cfg.structure.size() < 2) fail(ErrorKind::Config, "synth structure needs at least 2 sections");
  const std::set<char> labels(cfg.structure.begin(), cfg.structure.end());
  if (labels.size() < 2) fail(ErrorKind::Config, "synth structure needs at least 2 distinct labels");
  if (labels.size() > std::size_t(kRootSpan)) fail(ErrorKind::Config, "synth structure has too many labels");
  for (char c : cfg.structure) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') fail(ErrorKind::Config, "synth labels must be printable");
  }
  if (!(cfg.sigma >= 0.0)) fail(ErrorKind::Config, "synth sigma must be >= 0");
  if (cfg.beats_per_section < 4) fail(ErrorKind::Config, "synth beats_per_section must be >= 4");
  if (!(cfg.beat_period > 0.0)) fail(ErrorKind::Config, "synth beat_period must be positive");
  if (cfg.frames_per_beat < 1) fail(ErrorKind::Config, "synth frames_per_beat must be positive");
  if (cfg.template_peaks < 1) fail(ErrorKind::Config, "synth template_peaks must be positive");
}

SynthTrack gen_track(const SynthConfig& cfg) {
  validate(cfg);
  std::mt19937_64 rng(cfg.seed);

  // Distinct roots per label, in order of first appearance.
  std::vector<char> order;
  for (char c : cfg.structure)
    if (std::find(order.begin(), order.end(), c) == order.end()) order.push_back(c);
  std::vector<int> roots(kRootSpan);
  for (int i = 0; i < kRootSpan; ++i) roots[i] = i;
  for (std::size_t i = roots.size(); i > 1; --i) std::swap(roots[i - 1], roots[rng() % i]);
  std::vector<std::vector<float>> templates;
  for (std::size_t l = 0; l < order.size(); ++l) templates.push_back(make_template(roots[l], cfg.template_peaks, rng));

  const std::size_t sections = cfg.structure.size();
  const std::size_t bps = std::size_t(cfg.beats_per_section);
  const std::size_t fpb = std::size_t(cfg.frames_per_beat);
  const std::size_t frames = sections * bps * fpb;

  SynthTrack t;
  t.cqt.frame_rate = double(cfg.frames_per_beat) / cfg.beat_period;
  t.cqt.values = Matrix<float>(kCqtBins, frames);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t f = 0; f < frames; ++f) {
    const char label = cfg.structure[f / (bps * fpb)];
    const auto& tmpl = templates[std::find(order.begin(), order.end(), label) - order.begin()];
    for (int b = 0; b < kCqtBins; ++b) {
      double v = tmpl[b];
      if (cfg.sigma > 0.0) v += cfg.sigma * noise(rng);
      t.cqt.values(b, f) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }

  for (std::size_t k = 0; k < sections * bps; ++k) t.beats.beat_times.push_back(double(k) * cfg.beat_period);
  t.beats.source = BeatSource::File;
  for (std::size_t s = 0; s < sections; ++s) {
    t.annotation.segments.push_back({double(s * bps) * cfg.beat_period, double((s + 1) * bps) * cfg.beat_period,
                                     normalize_label(std::string(1, cfg.structure[s]))});
  }
  return t;
}

std::string random_structure(std::mt19937_64& rng) {
  const int n_sections = 3 + int(rng() % 4);
  const int n_labels = 2 + int(rng() % std::min<std::uint64_t>(3, std::uint64_t(n_sections) - 1));
  std::string s(1, 'A');
  while (int(s.size()) < n_sections) {
    char c = char('A' + rng() % std::uint64_t(n_labels - 1));
    if (c >= s.back()) ++c;  // skip the previous label
    s.push_back(c);
  }
  return s;
}

std::vector<ManifestEntry> gen_corpus(std::size_t n_tracks, const SynthConfig& base, std::uint64_t seed,
                                      const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<ManifestEntry> entries(n_tracks);
  const int width = std::max(3, int(std::to_string(n_tracks).size()));
  for (std::size_t i = 0; i < n_tracks; ++i) {
    std::string id = std::to_string(i);
    id = "track" + std::string(std::size_t(width) - std::min(id.size(), std::size_t(width)), '0') + id;
    std::mt19937_64 grammar(seed + i);
    SynthConfig cfg = base;
    cfg.structure = random_structure(grammar);
    cfg.seed = seed + i;
    const SynthTrack t = gen_track(cfg);

    ManifestEntry& e = entries[i];
    e.track_id = id;
    e.features_path = out_dir / (e.track_id + ".ssmf");
    e.beats_path = out_dir / (e.track_id + ".beats.txt");
    e.annotation_path = out_dir / (e.track_id + ".lab");
    e.frame_rate = t.cqt.frame_rate;
    e.structure = cfg.structure;
    write_feature_matrix(e.features_path, t.cqt.values);
    write_beats(e.beats_path, t.beats);
    write_annotation(e.annotation_path, t.annotation);
  }
  write_manifest(out_dir / "manifest.json", entries);
  return entries;
}

}  // namespace ssmnet
