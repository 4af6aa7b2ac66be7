#include <doctest.h>
#include <omp.h>

#include <cmath>
#include <numbers>

#include "ssmnet/error.hpp"
#include "ssmnet/frontend.hpp"
#include "support.hpp"

using namespace ssmnet;

namespace {

AudioBuffer sine(double freq, double seconds, int rate, double amp = 0.8) {
  AudioBuffer a;
  a.sample_rate = rate;
  a.samples.resize(static_cast<std::size_t>(seconds * rate));
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    a.samples[i] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * freq * double(i) / rate));
  }
  return a;
}

std::size_t argmax_bin(const CqtMatrix& c, std::size_t frame) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < c.values.rows(); ++k)
    if (c.values(k, frame) > c.values(best, frame)) best = k;
  return best;
}

// Within-cluster sum of squares of a contiguous run.
double sse(const std::vector<std::vector<float>>& f, std::size_t lo, std::size_t hi) {
  const std::size_t d = f[0].size();
  double total = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    double mean = 0.0;
    for (std::size_t i = lo; i < hi; ++i) mean += f[i][k];
    mean /= double(hi - lo);
    for (std::size_t i = lo; i < hi; ++i) total += (f[i][k] - mean) * (f[i][k] - mean);
  }
  return total;
}

std::vector<std::span<const float>> views(const std::vector<std::vector<float>>& f) {
  std::vector<std::span<const float>> v;
  for (const auto& x : f) v.emplace_back(x);
  return v;
}

CqtMatrix matrix_from_frames(const std::vector<std::vector<float>>& frames, double rate) {
  CqtMatrix c;
  c.frame_rate = rate;
  c.values = Matrix<float>(frames[0].size(), frames.size());
  for (std::size_t t = 0; t < frames.size(); ++t)
    for (std::size_t b = 0; b < frames[t].size(); ++b) c.values(b, t) = frames[t][b];
  return c;
}

}  // namespace

TEST_CASE("cqt: bin centres and window length") {
  const CqtConfig cfg;
  CHECK(cqt_bin_frequency(cfg, 0) == doctest::Approx(32.70));
  CHECK(cqt_bin_frequency(cfg, 12) == doctest::Approx(65.40));
  CHECK(cqt_bin_frequency(cfg, 71) == doctest::Approx(32.70 * std::pow(2.0, 71.0 / 12.0)));
  const double q = 1.0 / (std::pow(2.0, 1.0 / 12.0) - 1.0);
  CHECK(cqt_window_length(cfg) == std::size_t(std::ceil(q * 22050 / 32.70)));
}

TEST_CASE("cqt: A4 sine peaks at the bin nearest 440 Hz") {
  const CqtConfig cfg;
  // Oracle: nearest bin centre on a log scale.
  int expected = 0;
  for (int k = 1; k < 72; ++k) {
    const double fk = 32.70 * std::pow(2.0, k / 12.0);
    const double fb = 32.70 * std::pow(2.0, expected / 12.0);
    if (std::abs(std::log2(fk / 440.0)) < std::abs(std::log2(fb / 440.0))) expected = k;
  }
  CHECK(expected == 45);
  const auto c = compute_cqt(sine(440.0, 2.0, 22050), cfg);
  CHECK(c.frames() == 1 + std::size_t(2.0 * 22050) / 512);
  CHECK(c.frame_rate == doctest::Approx(22050.0 / 512.0));
  for (std::size_t t : {c.frames() / 3, c.frames() / 2}) CHECK(argmax_bin(c, t) == std::size_t(expected));
}

TEST_CASE("cqt: silence, range and gain invariance") {
  AudioBuffer silent;
  silent.sample_rate = 22050;
  silent.samples.assign(22050, 0.0f);
  const auto s = compute_cqt(silent);
  for (float v : s.values.storage()) REQUIRE(v == 0.0f);

  const auto a = sine(261.63, 1.5, 22050, 0.8);
  auto b = a;
  for (auto& x : b.samples) x *= 0.5f;
  const auto ca = compute_cqt(a), cb = compute_cqt(b);
  double worst = 0.0;
  for (std::size_t i = 0; i < ca.values.size(); ++i) {
    REQUIRE(ca.values.storage()[i] >= 0.0f);
    REQUIRE(ca.values.storage()[i] <= 1.0f);
    worst = std::max(worst, double(std::abs(ca.values.storage()[i] - cb.values.storage()[i])));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("cqt: too short and empty audio") {
  AudioBuffer a;
  a.sample_rate = 22050;
  CHECK_THROWS_AS(compute_cqt(a), Error);
  a.samples.assign(100, 0.1f);
  try {
    compute_cqt(a);
    FAIL("expected too-short error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::TooShort);
  }
}

TEST_CASE("cqt: result does not depend on the thread count") {
  const auto a = sine(110.0, 1.0, 22050);
  const int before = omp_get_max_threads();
  omp_set_num_threads(1);
  const auto one = compute_cqt(a);
  omp_set_num_threads(4);
  const auto four = compute_cqt(a);
  omp_set_num_threads(before);
  CHECK(one.values == four.values);
}

TEST_CASE("decimate: integer factors only, low tones survive") {
  const auto hi = sine(220.0, 1.0, 44100);
  const auto lo = decimate(hi, 22050);
  CHECK(lo.sample_rate == 22050);
  CHECK(lo.samples.size() == 22050);
  const auto ref = sine(220.0, 1.0, 22050);
  double worst = 0.0;
  for (std::size_t i = 1000; i < 21000; ++i) worst = std::max(worst, double(std::abs(lo.samples[i] - ref.samples[i])));
  CHECK(worst < 1e-2);
  try {
    decimate(hi, 30000);
    FAIL("expected unsupported");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Unsupported);
  }
  // A wrong-rate input is brought to the CQT rate before analysis.
  const auto c = compute_cqt(sine(440.0, 2.0, 44100));
  CHECK(argmax_bin(c, c.frames() / 2) == 45);
}

TEST_CASE("ward: [a,a,a,b] into two clusters matches brute force") {
  const std::vector<float> a{1.0f, 0.0f, 0.5f}, b{0.0f, 1.0f, 0.25f};
  const std::vector<std::vector<float>> f{a, a, a, b};
  std::size_t best_split = 1;
  for (std::size_t k = 1; k < f.size(); ++k)
    if (sse(f, 0, k) + sse(f, k, f.size()) < sse(f, 0, best_split) + sse(f, best_split, f.size())) best_split = k;
  CHECK(best_split == 3);
  CHECK(ward_partition(views(f), 2) == std::vector<std::size_t>{best_split, f.size() - best_split});

  // Same interval through subdivide_beats: columns [a, b].
  BeatGrid beats;
  beats.beat_times = {0.0, 4.0};
  const auto sub = subdivide_beats(matrix_from_frames(f, 1.0), beats, 2);
  REQUIRE(sub.values.cols() == 2);
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(sub.values(k, 0) == a[k]);
    CHECK(sub.values(k, 1) == b[k]);
  }
}

TEST_CASE("ward: three frames into two clusters is the optimal split") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<float> d(0.0f, 1.0f);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::vector<float>> f(3, std::vector<float>(4));
    for (auto& v : f)
      for (auto& x : v) x = d(rng);
    const double left = sse(f, 0, 2) + sse(f, 2, 3);
    const double right = sse(f, 0, 1) + sse(f, 1, 3);
    const auto got = ward_partition(views(f), 2);
    if (std::abs(left - right) < 1e-9) continue;
    CHECK(got == (left < right ? std::vector<std::size_t>{2, 1} : std::vector<std::size_t>{1, 2}));
  }
}

TEST_CASE("ward: run lengths cover the interval") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> d(0.0f, 1.0f);
  for (std::size_t n : {16u, 17u, 23u, 40u}) {
    std::vector<std::vector<float>> f(n, std::vector<float>(6));
    for (auto& v : f)
      for (auto& x : v) x = d(rng);
    const auto lengths = ward_partition(views(f), 16);
    REQUIRE(lengths.size() == 16);
    std::size_t total = 0;
    for (auto l : lengths) {
      CHECK(l >= 1);
      total += l;
    }
    CHECK(total == n);
  }
  CHECK_THROWS_AS(ward_partition({}, 16), Error);
}

TEST_CASE("subdivide: forced, constant and short intervals") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> d(0.0f, 1.0f);
  std::vector<std::vector<float>> frames(32 + 16 + 5, std::vector<float>(72));
  for (auto& v : frames)
    for (auto& x : v) x = d(rng);
  // Interval 1 is 32 copies of one vector.
  for (std::size_t t = 16; t < 48; ++t) frames[t] = frames[16];
  const auto cqt = matrix_from_frames(frames, 10.0);
  BeatGrid beats;
  beats.beat_times = {0.0, 1.6, 4.8, 5.3};  // frames 0, 16, 48, 53
  const auto sub = subdivide_beats(cqt, beats);
  REQUIRE(sub.values.cols() == 48);
  for (std::size_t c = 0; c < 16; ++c)
    for (std::size_t b = 0; b < 72; ++b) REQUIRE(sub.values(b, c) == frames[c][b]);
  for (std::size_t c = 16; c < 32; ++c)
    for (std::size_t b = 0; b < 72; ++b) REQUIRE(sub.values(b, c) == frames[16][b]);
  // 5 frames: column c takes frame 48 + c*5/16.
  for (std::size_t c = 0; c < 16; ++c)
    for (std::size_t b = 0; b < 72; ++b) REQUIRE(sub.values(b, 32 + c) == frames[48 + c * 5 / 16][b]);
}

TEST_CASE("subdivide: beats beyond the CQT are clamped with a warning") {
  std::vector<std::vector<float>> frames(40, std::vector<float>(72, 0.25f));
  BeatGrid beats;
  beats.beat_times = {0.0, 1.6, 100.0};
  test::LogCapture logs;
  const auto sub = subdivide_beats(matrix_from_frames(frames, 10.0), beats);
  CHECK(sub.values.cols() == 32);
  CHECK(logs.warnings.size() == 1);
}

TEST_CASE("patches: B=5 edge replication and exact middle fit") {
  SubBeatMatrix sub;
  sub.values = Matrix<float>(72, 16 * 4);
  for (std::size_t b = 0; b < 72; ++b)
    for (std::size_t c = 0; c < 64; ++c) sub.values(b, c) = float(c / 16) * 100.0f + float(b) + float(c % 16) / 32.0f;
  BeatGrid beats;
  beats.beat_times = {0, 1, 2, 3, 4};
  const auto p = assemble_patches(sub, beats);
  REQUIRE(p.size() == 5);
  CHECK(p.data.cols() == 64);
  CHECK(p.patch(0).size() == 72u * 64u);
  auto block_of = [&](std::size_t i, int blk) {
    return static_cast<int>(p.data(i * 72, blk * 16) / 100.0f);
  };
  CHECK(std::vector<int>{block_of(2, 0), block_of(2, 1), block_of(2, 2), block_of(2, 3)} ==
        std::vector<int>{0, 1, 2, 3});
  CHECK(std::vector<int>{block_of(0, 0), block_of(0, 1), block_of(0, 2), block_of(0, 3)} ==
        std::vector<int>{0, 0, 0, 1});
  CHECK(std::vector<int>{block_of(4, 0), block_of(4, 1), block_of(4, 2), block_of(4, 3)} ==
        std::vector<int>{2, 3, 3, 3});
  // The middle patch is the sub-beat matrix itself.
  for (std::size_t b = 0; b < 72; ++b)
    for (std::size_t c = 0; c < 64; ++c) REQUIRE(p.data(2 * 72 + b, c) == sub.values(b, c));

  beats.beat_times = {0, 1, 2, 3};
  CHECK_THROWS_AS(assemble_patches(sub, beats), Error);
}

TEST_CASE("patches: audio to patches end to end, and persistence") {
  const auto audio = sine(196.0, 4.0, 22050);
  const auto cqt = compute_cqt(audio);
  const auto beats = uniform_beats(audio.duration(), 0.5);
  const auto patches = assemble_patches(subdivide_beats(cqt, beats), beats);
  CHECK(patches.size() == beats.size());
  CHECK(patches.data.rows() == beats.size() * 72);
  CHECK(patches.data.cols() == 64);

  test::TempDir dir("patches");
  write_patches(dir / "x.ssmf", patches);
  CHECK(std::filesystem::exists(dir / "x.json"));
  const auto back = read_patches(dir / "x.ssmf");
  CHECK(back.data == patches.data);
  CHECK(back.beat_times == patches.beat_times);
}
