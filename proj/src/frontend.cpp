#include "ssmnet/frontend.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>

#include <json.hpp>

#include "ssmnet/binio.hpp"
#include "ssmnet/error.hpp"
#include "ssmnet/log.hpp"

namespace ssmnet {
namespace {

struct BinKernel {
  std::vector<double> re, im;  // window / sum(window) * exp(-i 2 pi f n / sr)
};

std::vector<BinKernel> make_kernels(const CqtConfig& cfg) {
  const double q = 1.0 / (std::pow(2.0, 1.0 / cfg.bins_per_octave) - 1.0);
  std::vector<BinKernel> kernels(cfg.n_bins);
  for (int k = 0; k < cfg.n_bins; ++k) {
    const double f = cqt_bin_frequency(cfg, k);
    const auto n = static_cast<std::size_t>(std::ceil(q * cfg.sample_rate / f));
    auto& kern = kernels[k];
    kern.re.resize(n);
    kern.im.resize(n);
    double wsum = 0.0;
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = n > 1 ? 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * double(i) / double(n - 1)) : 1.0;
      wsum += w[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double phase = -2.0 * std::numbers::pi * f * double(i) / cfg.sample_rate;
      kern.re[i] = w[i] / wsum * std::cos(phase);
      kern.im[i] = w[i] / wsum * std::sin(phase);
    }
  }
  return kernels;
}

float median_of(std::vector<float>& v) {
  const std::size_t n = v.size();
  const std::size_t mid = n / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  if (n % 2 == 1) return v[mid];
  const float hi = v[mid];
  const float lo = *std::max_element(v.begin(), v.begin() + mid);
  return lo + (hi - lo) * 0.5f;
}

}  // namespace

double cqt_bin_frequency(const CqtConfig& config, int k) {
  return config.f_min * std::pow(2.0, double(k) / config.bins_per_octave);
}

std::size_t cqt_window_length(const CqtConfig& config) {
  const double q = 1.0 / (std::pow(2.0, 1.0 / config.bins_per_octave) - 1.0);
  return static_cast<std::size_t>(std::ceil(q * config.sample_rate / config.f_min));
}

AudioBuffer decimate(const AudioBuffer& audio, int target_rate) {
  if (target_rate <= 0 || audio.sample_rate % target_rate != 0) {
    fail(ErrorKind::Unsupported, "cannot resample " + std::to_string(audio.sample_rate) + " Hz to " +
                                     std::to_string(target_rate) + " Hz (integer-factor decimation only)");
  }
  const int factor = audio.sample_rate / target_rate;
  if (factor == 1) return audio;

  const int half = 16 * factor;
  const double fc = 0.45 / factor;  // cycles per input sample
  std::vector<double> h(2 * half + 1);
  double hsum = 0.0;
  for (int n = -half; n <= half; ++n) {
    const double sinc = n == 0 ? 2.0 * fc : std::sin(2.0 * std::numbers::pi * fc * n) / (std::numbers::pi * n);
    const double win = 0.54 + 0.46 * std::cos(std::numbers::pi * n / half);
    h[n + half] = sinc * win;
    hsum += h[n + half];
  }
  for (double& v : h) v /= hsum;

  AudioBuffer out;
  out.sample_rate = target_rate;
  const std::size_t len = audio.samples.size();
  out.samples.resize((len + factor - 1) / factor);
  const long long n_in = static_cast<long long>(len);
#pragma omp parallel for schedule(static)
  for (long long m = 0; m < static_cast<long long>(out.samples.size()); ++m) {
    double acc = 0.0;
    const long long c = m * factor;
    for (int n = -half; n <= half; ++n) {
      const long long idx = c - n;
      if (idx >= 0 && idx < n_in) acc += h[n + half] * audio.samples[idx];
    }
    out.samples[m] = static_cast<float>(acc);
  }
  return out;
}

CqtMatrix compute_cqt(const AudioBuffer& input, const CqtConfig& cfg) {
  if (input.samples.empty()) fail(ErrorKind::EmptyInput, "compute_cqt: empty audio");
  if (cfg.n_bins != kCqtBins) fail(ErrorKind::Config, "compute_cqt: the encoder expects 72 bins");
  const AudioBuffer audio = input.sample_rate == cfg.sample_rate ? input : decimate(input, cfg.sample_rate);

  const std::size_t window = cqt_window_length(cfg);
  const std::size_t len = audio.samples.size();
  if (len < window) {
    fail(ErrorKind::TooShort, "compute_cqt: " + std::to_string(len) + " samples is shorter than the " +
                                  std::to_string(window) + "-sample analysis window");
  }

  const auto kernels = make_kernels(cfg);
  const std::size_t frames = 1 + len / cfg.hop;
  Matrix<double> mag(cfg.n_bins, frames);
  const long long n_samples = static_cast<long long>(len);

#pragma omp parallel for schedule(dynamic, 4)
  for (long long t = 0; t < static_cast<long long>(frames); ++t) {
    const long long center = t * cfg.hop;
    for (int k = 0; k < cfg.n_bins; ++k) {
      const auto& kern = kernels[k];
      const long long n = static_cast<long long>(kern.re.size());
      const long long start = center - n / 2;
      const long long lo = std::max(0LL, -start);
      const long long hi = std::min(n, n_samples - start);
      double re = 0.0, im = 0.0;
      for (long long i = lo; i < hi; ++i) {
        const double x = audio.samples[start + i];
        re += kern.re[i] * x;
        im += kern.im[i] * x;
      }
      mag(k, t) = std::hypot(re, im);
    }
  }

  CqtMatrix out;
  out.frame_rate = double(cfg.sample_rate) / cfg.hop;
  out.values = Matrix<float>(cfg.n_bins, frames);
  const double ref = *std::max_element(mag.storage().begin(), mag.storage().end());
  if (!(ref > 0.0)) return out;  // digital silence

  std::vector<double> db(mag.size());
  double lo = 0.0, hi = -cfg.top_db;
  for (std::size_t i = 0; i < mag.size(); ++i) {
    db[i] = std::max(20.0 * std::log10(mag.storage()[i] / ref), -cfg.top_db);
    lo = std::min(lo, db[i]);
    hi = std::max(hi, db[i]);
  }
  if (hi - lo <= 0.0) return out;
  for (std::size_t i = 0; i < db.size(); ++i) {
    out.values.storage()[i] = static_cast<float>((db[i] - lo) / (hi - lo));
  }
  return out;
}

std::vector<std::size_t> ward_partition(const std::vector<std::span<const float>>& frames, std::size_t clusters) {
  const std::size_t n = frames.size();
  if (clusters == 0 || n < clusters) {
    fail(ErrorKind::Argument, "ward_partition: cannot split " + std::to_string(n) + " frames into " +
                                  std::to_string(clusters) + " clusters");
  }
  const std::size_t dim = n ? frames[0].size() : 0;

  struct Run {
    std::size_t count;
    std::vector<double> sum;
  };
  std::vector<Run> runs;
  runs.reserve(n);
  for (const auto& f : frames) runs.push_back({1, std::vector<double>(f.begin(), f.end())});

  auto cost = [dim](const Run& a, const Run& b) {
    double d2 = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      const double d = a.sum[i] / double(a.count) - b.sum[i] / double(b.count);
      d2 += d * d;
    }
    return double(a.count) * double(b.count) / double(a.count + b.count) * d2;
  };

  std::vector<double> costs(n > 0 ? n - 1 : 0);
  for (std::size_t i = 0; i + 1 < n; ++i) costs[i] = cost(runs[i], runs[i + 1]);

  while (runs.size() > clusters) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < costs.size(); ++i) {
      if (costs[i] < costs[best]) best = i;
    }
    Run& a = runs[best];
    const Run& b = runs[best + 1];
    a.count += b.count;
    for (std::size_t i = 0; i < dim; ++i) a.sum[i] += b.sum[i];
    runs.erase(runs.begin() + static_cast<std::ptrdiff_t>(best) + 1);
    costs.erase(costs.begin() + static_cast<std::ptrdiff_t>(best));
    if (best > 0) costs[best - 1] = cost(runs[best - 1], runs[best]);
    if (best < costs.size()) costs[best] = cost(runs[best], runs[best + 1]);
  }

  std::vector<std::size_t> lengths;
  lengths.reserve(runs.size());
  for (const auto& r : runs) lengths.push_back(r.count);
  return lengths;
}

SubBeatMatrix subdivide_beats(const CqtMatrix& cqt, const BeatGrid& beats, int n_sub) {
  const std::size_t F = cqt.frames();
  const std::size_t B = beats.size();
  const std::size_t bins = cqt.values.rows();
  if (F == 0) fail(ErrorKind::EmptyInput, "subdivide_beats: CQT has no frames");
  if (B < 2) fail(ErrorKind::TooShort, "subdivide_beats: need at least two beats");
  if (n_sub <= 0) fail(ErrorKind::Argument, "subdivide_beats: n_sub must be positive");
  if (!(cqt.frame_rate > 0.0)) fail(ErrorKind::Argument, "subdivide_beats: frame rate must be positive");

  std::vector<std::size_t> pos(B);
  std::size_t clamped = 0;
  for (std::size_t i = 0; i < B; ++i) {
    const double p = std::round(beats.beat_times[i] * cqt.frame_rate);
    if (p < 0.0 || p > double(F)) ++clamped;
    pos[i] = static_cast<std::size_t>(std::clamp(p, 0.0, double(F)));
  }
  if (clamped > 0) {
    log_warning(std::to_string(clamped) + " beat(s) fall outside the " + std::to_string(F) +
                "-frame CQT and were clamped");
  }

  SubBeatMatrix out;
  out.beats_covered = B;
  out.values = Matrix<float>(bins, static_cast<std::size_t>(n_sub) * (B - 1));
  const std::size_t sub = static_cast<std::size_t>(n_sub);

#pragma omp parallel for schedule(dynamic)
  for (long long jj = 0; jj < static_cast<long long>(B - 1); ++jj) {
    const std::size_t j = static_cast<std::size_t>(jj);
    const std::size_t lo = pos[j];
    const std::size_t n = pos[j + 1] - lo;
    const std::size_t col0 = j * sub;

    if (n < sub) {
      // Too few frames to cluster: nearest-frame replication.
      for (std::size_t c = 0; c < sub; ++c) {
        const std::size_t f = n == 0 ? std::min(lo, F - 1) : lo + c * n / sub;
        for (std::size_t b = 0; b < bins; ++b) out.values(b, col0 + c) = cqt.values(b, f);
      }
      continue;
    }

    std::vector<std::vector<float>> cols(n, std::vector<float>(bins));
    std::vector<std::span<const float>> views(n);
    for (std::size_t f = 0; f < n; ++f) {
      for (std::size_t b = 0; b < bins; ++b) cols[f][b] = cqt.values(b, lo + f);
      views[f] = cols[f];
    }
    const auto lengths = ward_partition(views, sub);
    std::size_t start = 0;
    std::vector<float> scratch;
    for (std::size_t c = 0; c < sub; ++c) {
      for (std::size_t b = 0; b < bins; ++b) {
        scratch.resize(lengths[c]);
        for (std::size_t f = 0; f < lengths[c]; ++f) scratch[f] = cols[start + f][b];
        out.values(b, col0 + c) = median_of(scratch);
      }
      start += lengths[c];
    }
  }
  return out;
}

PatchSequence assemble_patches(const SubBeatMatrix& sub, const BeatGrid& beats) {
  const std::size_t B = beats.size();
  if (B < kMinBeats) {
    fail(ErrorKind::TooShort, "assemble_patches: need at least " + std::to_string(kMinBeats) + " beats, got " +
                                  std::to_string(B));
  }
  if (sub.values.rows() != kCqtBins || sub.values.cols() != std::size_t(kSubBeats) * (B - 1)) {
    fail(ErrorKind::Shape, "assemble_patches: sub-beat matrix is " + std::to_string(sub.values.rows()) + "x" +
                               std::to_string(sub.values.cols()) + ", expected 72x" +
                               std::to_string(kSubBeats * (B - 1)));
  }

  PatchSequence out;
  out.beat_times = beats.beat_times;
  out.data = Matrix<float>(B * kCqtBins, kPatchCols);
  const long long last = static_cast<long long>(B) - 2;  // index of the final interval
  for (std::size_t i = 0; i < B; ++i) {
    for (int blk = 0; blk < kPatchBeats; ++blk) {
      // interval (i-2, i-1), (i-1, i), (i, i+1), (i+1, i+2), edge-replicated
      const long long interval = std::clamp(static_cast<long long>(i) + blk - 2, 0LL, last);
      for (int b = 0; b < kCqtBins; ++b) {
        for (int s = 0; s < kSubBeats; ++s) {
          out.data(i * kCqtBins + b, blk * kSubBeats + s) = sub.values(b, interval * kSubBeats + s);
        }
      }
    }
  }
  return out;
}

std::filesystem::path sidecar_path(const std::filesystem::path& ssmf_path) {
  auto p = ssmf_path;
  p.replace_extension(".json");
  return p;
}

void write_patches(const std::filesystem::path& ssmf_path, const PatchSequence& patches) {
  write_feature_matrix(ssmf_path, patches.data);
  nlohmann::json side;
  side["n_patches"] = patches.size();
  side["beat_times"] = patches.beat_times;
  binio::write_file_atomic(sidecar_path(ssmf_path), side.dump(2) + "\n");
}

PatchSequence read_patches(const std::filesystem::path& ssmf_path) {
  PatchSequence out;
  out.data = read_feature_matrix(ssmf_path);
  const auto side_bytes = binio::read_file(sidecar_path(ssmf_path));
  nlohmann::json side;
  try {
    side = nlohmann::json::parse(side_bytes.begin(), side_bytes.end());
    out.beat_times = side.at("beat_times").get<std::vector<double>>();
    const auto n = side.at("n_patches").get<std::size_t>();
    if (out.data.cols() != kPatchCols || out.data.rows() != n * kCqtBins || out.beat_times.size() != n) {
      fail(ErrorKind::Shape, ssmf_path.string() + ": patch matrix does not match sidecar n_patches");
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, sidecar_path(ssmf_path).string() + ": " + e.what());
  }
  return out;
}

}  // namespace ssmnet
