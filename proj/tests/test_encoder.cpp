#include <doctest.h>
#include <omp.h>

#include <cmath>

#include "ssmnet/encoder.hpp"
#include "ssmnet/error.hpp"
#include "ssmnet/frontend.hpp"
#include "ssmnet/objective.hpp"
#include "support.hpp"

using namespace ssmnet;

namespace {

std::size_t count_oracle(int c1, int c2, int c3) {
  const int kernel = 6 * 4;
  std::size_t n = 0;
  int in = 1;
  for (int out : {c1, c2, c3}) {
    n += std::size_t(out) * in * kernel + out;  // conv weight + bias
    n += 2 * std::size_t(out);                  // group-norm gamma + beta
    in = out;
  }
  // Pools (2,4), (3,4), (3,2) take 72x64 to 4x2.
  const int h = 72 / 2 / 3 / 3, w = 64 / 4 / 4 / 2;
  n += std::size_t(128) * (c3 * h * w) + 128;
  return n;
}

PatchSequence random_patches(std::size_t T, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  PatchSequence p;
  p.data = test::random_matrix<float>(T * kCqtBins, kPatchCols, rng);
  for (std::size_t i = 0; i < T; ++i) p.beat_times.push_back(0.5 * double(i));
  return p;
}

}  // namespace

TEST_CASE("parameter count") {
  CHECK(count_oracle(32, 64, 128) == 378400);
  CHECK(parameter_count(ChannelPlan{}) == kParameterCount);
  CHECK(init_params(0).count() == kParameterCount);
  CHECK(parameter_count(ChannelPlan{8, 16, 16}) == count_oracle(8, 16, 16));
}

TEST_CASE("init: seeded, gamma ones, zero biases") {
  const auto a = init_params(42), b = init_params(42), c = init_params(43);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  for (int l = 0; l < 3; ++l) {
    for (float g : a.norm_gamma[l].storage()) REQUIRE(g == 1.0f);
    for (float v : a.norm_beta[l].storage()) REQUIRE(v == 0.0f);
    for (float v : a.conv_bias[l].storage()) REQUIRE(v == 0.0f);
  }
  // Fan-in scaled spread for the first conv (fan_in 24).
  double ss = 0.0;
  for (float v : a.conv_weight[0].storage()) ss += double(v) * v;
  const double sd = std::sqrt(ss / double(a.conv_weight[0].size()));
  CHECK(sd == doctest::Approx(std::sqrt(2.0 / 24.0)).epsilon(0.15));
}

TEST_CASE("encoder: shape ladder, unit norm, determinism") {
  const auto params = init_params(1);
  CHECK(pooled_sizes() == std::array<std::array<int, 2>, 3>{{{36, 16}, {12, 4}, {4, 2}}});

  const auto p = random_patches(5, 2);
  PatchGraph<float> g;
  build_patch_graph<float>(g, params, p.patch(0), false);
  CHECK(g.pooled_shapes[0] == Shape{32, 36, 16});
  CHECK(g.pooled_shapes[1] == Shape{64, 12, 4});
  CHECK(g.pooled_shapes[2] == Shape{128, 4, 2});
  CHECK(g.tape.value(g.embedding).size() == 128);

  auto q = p;
  std::copy(p.patch(1).begin(), p.patch(1).end(), q.data.data() + 3 * kCqtBins * kPatchCols);  // patch 3 := patch 1
  const auto e = encode(q, params, "x");
  REQUIRE(e.vectors.rows() == 5);
  REQUIRE(e.vectors.cols() == 128);
  for (std::size_t i = 0; i < 5; ++i) {
    double ss = 0.0;
    for (float v : e.vectors.row(i)) ss += double(v) * v;
    CHECK(std::sqrt(ss) == doctest::Approx(1.0).epsilon(1e-5));
  }
  CHECK(std::equal(e.vectors.row(1).begin(), e.vectors.row(1).end(), e.vectors.row(3).begin()));
  CHECK(encode(q, params).vectors == e.vectors);
}

TEST_CASE("encoder: float and double paths agree") {
  const auto pf = init_params(3);
  const auto pd = pf.cast<double>();
  const auto p = random_patches(3, 4);
  const auto ef = encode_stacked(p.data, pf);
  const auto ed = encode_stacked(p.data.cast<double>(), pd);
  for (std::size_t i = 0; i < ef.size(); ++i) REQUIRE(double(ef.storage()[i]) == doctest::Approx(ed.storage()[i]).epsilon(1e-3));
}

TEST_CASE("encoder: bad patch size is a shape error naming the stage") {
  PatchGraph<float> g;
  std::vector<float> small(10);
  try {
    build_patch_graph<float>(g, init_params(0), small, false);
    FAIL("expected shape error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Shape);
    CHECK(std::string(e.what()).find("input") != std::string::npos);
  }
}

TEST_CASE("objective gradient is identical across thread counts") {
  const auto params = init_params(5);
  const auto p = random_patches(6, 6);
  BinarySSM truth;
  truth.values = Matrix<std::uint8_t>(6, 6);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j) truth.values(i, j) = (i < 3) == (j < 3);
  truth.lambda = truth.lambda_raw = 0.5;
  const int before = omp_get_max_threads();
  auto run = [&](int threads) {
    omp_set_num_threads(threads);
    auto grad = EncoderParams<float>::zeros(params.plan);
    const auto obj = track_objective<float>(params, p.data, truth, LossConfig{1e-6, LossNormalization::Mean}, &grad);
    return std::make_pair(obj.loss.total, grad);
  };
  const auto one = run(1);
  const auto four = run(4);
  omp_set_num_threads(before);
  CHECK(one.first == four.first);
  CHECK(one.second == four.second);
}

TEST_CASE("model file: round-trip and damage") {
  test::TempDir dir("model");
  auto params = init_params(9);
  params.fc_bias[3] = -0.0f;
  save_params(params, dir / "m.ssmn");
  const auto back = load_params(dir / "m.ssmn");
  CHECK(back == params);
  CHECK(std::signbit(back.fc_bias[3]));
  CHECK(encode_model(back) == encode_model(params));

  const auto bytes = encode_model(params);
  auto expect_kind = [](std::vector<std::uint8_t> b, ErrorKind kind) {
    try {
      decode_model(b);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == kind);
    }
  };
  expect_kind({bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(bytes.size() / 2)}, ErrorKind::Corruption);
  auto v99 = bytes;
  v99[4] = 99;
  expect_kind(v99, ErrorKind::Version);
  auto magic = bytes;
  magic[0] = 'X';
  expect_kind(magic, ErrorKind::Format);
  auto flipped = bytes;
  flipped.back() ^= 0x40;
  expect_kind(flipped, ErrorKind::Corruption);

  try {
    load_params(dir / "none.ssmn");
    FAIL("expected not found");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NotFound);
  }
}
