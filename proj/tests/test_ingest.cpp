#include <doctest.h>

#include <cstring>

#include "ssmnet/binio.hpp"
#include "ssmnet/error.hpp"
#include "ssmnet/ingest.hpp"
#include "support.hpp"

using namespace ssmnet;
using test::TempDir;

namespace {

// Hand-built RIFF/WAVE with 16-bit PCM frames, independent of the writer under test.
std::string pcm16_wav(const std::vector<std::int16_t>& interleaved, int channels, int rate) {
  auto le32 = [](std::uint32_t v) { return std::string{char(v), char(v >> 8), char(v >> 16), char(v >> 24)}; };
  auto le16 = [](std::uint16_t v) { return std::string{char(v), char(v >> 8)}; };
  std::string data;
  for (auto s : interleaved) data += le16(static_cast<std::uint16_t>(s));
  std::string fmt = le16(1) + le16(std::uint16_t(channels)) + le32(std::uint32_t(rate)) +
                    le32(std::uint32_t(rate * channels * 2)) + le16(std::uint16_t(channels * 2)) + le16(16);
  std::string body = "WAVE" + std::string("fmt ") + le32(16) + fmt + "data" + le32(std::uint32_t(data.size())) + data;
  return "RIFF" + le32(std::uint32_t(body.size())) + body;
}

}  // namespace

TEST_CASE("wav: 16-bit extremes map by 1/32768") {
  TempDir dir("wav");
  test::spit(dir / "a.wav", pcm16_wav({32767, -32768, 0}, 1, 8000));
  const auto a = read_wav(dir / "a.wav");
  REQUIRE(a.samples.size() == 3);
  CHECK(a.sample_rate == 8000);
  CHECK(a.samples[0] == doctest::Approx(32767.0 / 32768.0).epsilon(1e-9));
  CHECK(a.samples[1] == -1.0f);
  CHECK(a.samples[2] == 0.0f);
}

TEST_CASE("wav: stereo is averaged to mono") {
  TempDir dir("wav");
  test::spit(dir / "s.wav", pcm16_wav({16384, -16384, 8192, 8192}, 2, 22050));
  const auto a = read_wav(dir / "s.wav");
  REQUIRE(a.samples.size() == 2);
  CHECK(a.samples[0] == 0.0f);
  CHECK(a.samples[1] == doctest::Approx(0.25));
}

TEST_CASE("wav: float and pcm writers round-trip") {
  TempDir dir("wav");
  const std::vector<float> x{0.0f, 0.5f, -0.25f, 0.999f, -1.0f};
  write_wav_float(dir / "f.wav", x, 22050);
  const auto f = read_wav(dir / "f.wav");
  CHECK(f.samples == x);
  write_wav_pcm16(dir / "p.wav", x, 22050);
  const auto p = read_wav(dir / "p.wav");
  REQUIRE(p.samples.size() == x.size());
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(p.samples[i] == doctest::Approx(x[i]).epsilon(1e-4));
}

TEST_CASE("wav: errors") {
  TempDir dir("wav");
  try {
    read_wav(dir / "missing.wav");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NotFound);
  }
  test::spit(dir / "bad.wav", "RIFX....WAVE");
  CHECK_THROWS_AS(read_wav(dir / "bad.wav"), Error);
}

TEST_CASE("beats: parse, monotonicity and length") {
  const auto g = parse_beats("0.5\n1.0\n1.5\n2.0\n2.5");
  CHECK(g.beat_times == std::vector<double>{0.5, 1.0, 1.5, 2.0, 2.5});

  try {
    parse_beats("1.0\n0.5\n1.5\n2.0\n2.5\n");
    FAIL("expected validation error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Validation);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  try {
    parse_beats("");
    FAIL("expected too-short error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::TooShort);
  }
  try {
    parse_beats("0.5\nabc\n");
    FAIL("expected parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Parse);
  }
}

TEST_CASE("beats: uniform fallback grid") {
  CHECK_THROWS_AS(uniform_beats(2.0, 0.5), Error);
  CHECK(uniform_beats(10.0, 1.0).beat_times == std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9});
  const auto g = uniform_beats(3.0, 0.5);
  CHECK(g.beat_times == std::vector<double>{0.5, 1.0, 1.5, 2.0, 2.5});
  CHECK(g.source == BeatSource::UniformFallback);
  CHECK_THROWS_AS(uniform_beats(3.0, 0.0), Error);
}

TEST_CASE("beats: file round-trip is bit-exact") {
  TempDir dir("beats");
  BeatGrid g;
  g.beat_times = {0.1, 0.2 + 1e-13, 1.0 / 3.0, 2.0 / 3.0, 12345.678901234567};
  write_beats(dir / "b.txt", g);
  CHECK(read_beats(dir / "b.txt").beat_times == g.beat_times);
}

TEST_CASE("annotation: parse, normalize, gaps and overlaps") {
  const auto a = parse_annotation("0\t10\tA\n10\t20\tB");
  REQUIRE(a.segments.size() == 2);
  CHECK(a.segments[0] == Segment{0, 10, "a"});
  CHECK(a.segments[1] == Segment{10, 20, "b"});

  try {
    parse_annotation("0\t10\tVerse\n5\t20\tB");
    FAIL("expected overlap error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Validation);
  }

  const auto gap = parse_annotation("0\t10\tA\n20\t30\tA");
  REQUIRE(gap.segments.size() == 2);
  CHECK(gap.segments[0].label == gap.segments[1].label);

  const auto spaced = parse_annotation("0 10  Chorus Part\n");
  REQUIRE(spaced.segments.size() == 1);
  CHECK(spaced.segments[0].label == "chorus part");

  CHECK_THROWS_AS(parse_annotation("5\t5\tA\n"), Error);
  CHECK_THROWS_AS(parse_annotation("0\tx\tA\n"), Error);
}

TEST_CASE("annotation: file round-trip") {
  TempDir dir("lab");
  SegmentAnnotation a;
  a.segments = {{0.0, 1.25, "intro"}, {1.25, 7.0 / 3.0, "verse"}, {10.0, 20.5, "chorus b"}};
  write_annotation(dir / "x.lab", a);
  CHECK(read_annotation(dir / "x.lab").segments == a.segments);
}

TEST_CASE("ssmf: round-trip and malformed inputs") {
  TempDir dir("ssmf");
  std::mt19937_64 rng(3);
  auto m = test::random_matrix<float>(72, 37, rng, -5.0, 5.0);
  m(0, 0) = -0.0f;
  m(1, 1) = 1e-40f;  // subnormal
  write_feature_matrix(dir / "m.ssmf", m);
  const auto back = read_feature_matrix(dir / "m.ssmf");
  REQUIRE(back.rows() == m.rows());
  REQUIRE(back.cols() == m.cols());
  CHECK(std::memcmp(back.data(), m.data(), m.size() * sizeof(float)) == 0);

  auto bytes = encode_feature_matrix(m);
  std::memcpy(bytes.data(), "XXXX", 4);
  try {
    decode_feature_matrix(bytes);
    FAIL("expected format error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Format);
  }

  binio::Writer w;
  w.magic("SSMF");
  w.u32(kSsmfVersion);
  w.u32(2);
  w.u32(3);
  for (int i = 0; i < 5; ++i) w.f32(float(i));
  try {
    decode_feature_matrix(w.bytes());
    FAIL("expected length error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Length);
  }
}
