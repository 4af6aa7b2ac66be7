#include "ssmnet/encoder.hpp"

#include <cmath>
#include <exception>
#include <random>

#include <json.hpp>

#include "ssmnet/binio.hpp"
#include "ssmnet/error.hpp"

namespace ssmnet {

std::size_t parameter_count(const ChannelPlan& plan) {
  std::size_t n = 0;
  int cin = 1;
  for (int c : plan.channels()) {
    n += std::size_t(c) * cin * kConvKernelH * kConvKernelW + c;  // kernel + bias
    n += 2 * std::size_t(c);                                       // gamma + beta
    cin = c;
  }
  const auto pooled = pooled_sizes();
  const std::size_t flat = std::size_t(cin) * pooled[2][0] * pooled[2][1];
  return n + flat * kEmbeddingDim + kEmbeddingDim;
}

std::array<std::array<int, 2>, 3> pooled_sizes() {
  std::array<std::array<int, 2>, 3> out{};
  int h = kCqtBins, w = kPatchCols;
  for (int l = 0; l < 3; ++l) {
    h /= kPoolKernels[l][0];
    w /= kPoolKernels[l][1];
    out[l] = {h, w};
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>*> EncoderParams<T>::tensors() {
  std::vector<Tensor<T>*> out;
  for (int l = 0; l < 3; ++l) {
    out.push_back(&conv_weight[l]);
    out.push_back(&conv_bias[l]);
    out.push_back(&norm_gamma[l]);
    out.push_back(&norm_beta[l]);
  }
  out.push_back(&fc_weight);
  out.push_back(&fc_bias);
  return out;
}

template <typename T>
std::vector<const Tensor<T>*> EncoderParams<T>::tensors() const {
  auto mut = const_cast<EncoderParams*>(this)->tensors();
  return {mut.begin(), mut.end()};
}

template <typename T>
std::vector<std::string> EncoderParams<T>::tensor_names() {
  std::vector<std::string> out;
  for (int l = 1; l <= 3; ++l) {
    const std::string b = "block" + std::to_string(l) + ".";
    out.push_back(b + "conv.weight");
    out.push_back(b + "conv.bias");
    out.push_back(b + "norm.gamma");
    out.push_back(b + "norm.beta");
  }
  out.push_back("fc.weight");
  out.push_back("fc.bias");
  return out;
}

template <typename T>
std::size_t EncoderParams<T>::count() const {
  std::size_t n = 0;
  for (const auto* t : tensors()) n += t->size();
  return n;
}

template <typename T>
EncoderParams<T> EncoderParams<T>::zeros(const ChannelPlan& plan) {
  EncoderParams p;
  p.plan = plan;
  int cin = 1;
  const auto ch = plan.channels();
  for (int l = 0; l < 3; ++l) {
    p.conv_weight[l] = Tensor<T>(Shape{ch[l], cin, kConvKernelH, kConvKernelW});
    p.conv_bias[l] = Tensor<T>(Shape{ch[l]});
    p.norm_gamma[l] = Tensor<T>(Shape{ch[l]});
    p.norm_beta[l] = Tensor<T>(Shape{ch[l]});
    cin = ch[l];
  }
  const auto pooled = pooled_sizes();
  p.fc_weight = Tensor<T>(Shape{kEmbeddingDim, cin * pooled[2][0] * pooled[2][1]});
  p.fc_bias = Tensor<T>(Shape{kEmbeddingDim});
  return p;
}

template struct EncoderParams<float>;
template struct EncoderParams<double>;

EncoderParams<float> init_params(std::uint64_t seed, const ChannelPlan& plan) {
  auto p = EncoderParams<float>::zeros(plan);
  p.seed = seed;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto fill = [&](Tensor<float>& w, std::size_t fan_in) {
    const double std_dev = std::sqrt(2.0 / double(fan_in));
    for (auto& v : w.values()) v = static_cast<float>(normal(rng) * std_dev);
  };
  for (int l = 0; l < 3; ++l) {
    auto& w = p.conv_weight[l];
    fill(w, std::size_t(w.dim(1)) * w.dim(2) * w.dim(3));
    p.norm_gamma[l].fill(1.0f);
  }
  fill(p.fc_weight, std::size_t(p.fc_weight.dim(1)));
  return p;
}

template <typename T>
void build_patch_graph(PatchGraph<T>& g, const EncoderParams<T>& params, std::span<const T> patch, bool with_grad,
                       bool input_grad) {
  if (patch.size() != std::size_t(kCqtBins) * kPatchCols) {
    fail(ErrorKind::Shape, "encoder stage 'input': expected a 72x64 patch, got " + std::to_string(patch.size()) +
                               " values");
  }
  auto& tape = g.tape;
  tape.reset();
  g.params.clear();
  for (const auto* t : params.tensors()) g.params.push_back(tape.parameter(*t, with_grad));

  Tensor<T> x(Shape{1, kCqtBins, kPatchCols}, std::vector<T>(patch.begin(), patch.end()));
  g.input = input_grad ? tape.input(std::move(x)) : tape.constant(std::move(x));

  const auto expected = pooled_sizes();
  const auto channels = params.plan.channels();
  auto h = g.input;
  std::string stage;
  try {
    for (int l = 0; l < 3; ++l) {
      const std::string block = "block" + std::to_string(l + 1);
      const auto* p = &g.params[4 * l];
      stage = block + "/conv";
      h = tape.conv2d(h, p[0], p[1]);
      stage = block + "/selu";
      h = tape.selu(h);
      stage = block + "/group_norm";
      h = tape.group_norm(h, p[2], p[3], norm_groups(channels[l]));
      stage = block + "/max_pool";
      h = tape.max_pool2d(h, kPoolKernels[l][0], kPoolKernels[l][1]);
      const Shape want{channels[l], expected[l][0], expected[l][1]};
      if (tape.value(h).shape() != want) {
        fail(ErrorKind::Shape, "produced " + tape.value(h).shape().str() + ", expected " + want.str());
      }
      g.pooled_shapes[l] = tape.value(h).shape();
    }
    stage = "flatten";
    h = tape.flatten(h);
    stage = "fc";
    h = tape.linear(h, g.params[12], g.params[13]);
    stage = "fc/selu";
    h = tape.selu(h);
    stage = "l2_normalize";
    g.embedding = tape.l2_normalize(h);
  } catch (const Error& e) {
    fail(e.kind(), "encoder stage '" + stage + "': " + e.what());
  }
}

template <typename T>
Matrix<T> encode_stacked(const Matrix<T>& stacked, const EncoderParams<T>& params) {
  if (stacked.cols() != kPatchCols || stacked.rows() % kCqtBins != 0) {
    fail(ErrorKind::Shape, "encode: stacked patches must be (T*72) x 64");
  }
  const std::size_t n = stacked.rows() / kCqtBins;
  Matrix<T> out(n, kEmbeddingDim);
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
  for (long long ii = 0; ii < static_cast<long long>(n); ++ii) {
    const std::size_t i = static_cast<std::size_t>(ii);
    try {
      PatchGraph<T> g;
      build_patch_graph<T>(g, params, {stacked.data() + i * kCqtBins * kPatchCols, std::size_t(kCqtBins) * kPatchCols},
                           false);
      const auto& e = g.tape.value(g.embedding);
      std::copy(e.data(), e.data() + kEmbeddingDim, out.row(i).begin());
    } catch (...) {
#pragma omp critical(ssmnet_encode_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

template void build_patch_graph<float>(PatchGraph<float>&, const EncoderParams<float>&, std::span<const float>, bool,
                                       bool);
template void build_patch_graph<double>(PatchGraph<double>&, const EncoderParams<double>&, std::span<const double>,
                                        bool, bool);
template Matrix<float> encode_stacked(const Matrix<float>&, const EncoderParams<float>&);
template Matrix<double> encode_stacked(const Matrix<double>&, const EncoderParams<double>&);

EmbeddingSequence encode(const PatchSequence& patches, const EncoderParams<float>& params,
                         const std::string& track_id) {
  return {track_id, encode_stacked(patches.data, params)};
}

std::vector<std::uint8_t> encode_model(const EncoderParams<float>& params) {
  binio::Writer payload;
  nlohmann::json layout = nlohmann::json::array();
  const auto names = EncoderParams<float>::tensor_names();
  const auto tensors = params.tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    payload.f32s(tensors[i]->values());
    layout.push_back({{"name", names[i]}, {"shape", tensors[i]->shape().dims()}});
  }

  nlohmann::json header;
  header["format"] = "SSMN";
  header["channel_plan"] = {params.plan.c1, params.plan.c2, params.plan.c3};
  header["seed"] = params.seed;
  header["n_params"] = params.count();
  header["crc32"] = binio::crc32(payload.bytes());
  header["tensors"] = layout;
  header["dtype"] = "float32-le";
  header["creator"] = "ssmnet";
  const std::string text = header.dump();

  binio::Writer w;
  w.magic("SSMN");
  w.u32(kModelVersion);
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.raw(text);
  w.raw(payload.bytes());
  return w.take();
}

EncoderParams<float> decode_model(std::span<const std::uint8_t> bytes, const std::string& ctx) {
  binio::Reader r(bytes, ErrorKind::Corruption, ctx);
  if (!r.magic("SSMN")) fail(ErrorKind::Format, ctx + ": bad magic (expected SSMN)");
  const auto version = r.u32();
  if (version != kModelVersion) {
    fail(ErrorKind::Version, ctx + ": model version " + std::to_string(version) + " is not supported (expected " +
                                 std::to_string(kModelVersion) + ")");
  }
  const auto header_len = r.u32();
  const auto header_bytes = r.raw(header_len);

  nlohmann::json header;
  ChannelPlan plan;
  std::uint32_t crc = 0;
  std::uint64_t seed = 0;
  try {
    header = nlohmann::json::parse(header_bytes.begin(), header_bytes.end());
    const auto cp = header.at("channel_plan").get<std::vector<int>>();
    if (cp.size() != 3) fail(ErrorKind::Corruption, ctx + ": channel_plan must have 3 entries");
    plan = {cp[0], cp[1], cp[2]};
    crc = header.at("crc32").get<std::uint32_t>();
    seed = header.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Corruption, ctx + ": bad header: " + e.what());
  }
  if (plan.c1 <= 0 || plan.c2 <= 0 || plan.c3 <= 0 || plan.c1 > 4096 || plan.c2 > 4096 || plan.c3 > 4096) {
    fail(ErrorKind::Corruption, ctx + ": implausible channel plan");
  }

  auto params = EncoderParams<float>::zeros(plan);
  params.seed = seed;
  const std::size_t need = params.count() * 4;
  if (r.remaining() != need) {
    fail(ErrorKind::Corruption, ctx + ": payload is " + std::to_string(r.remaining()) + " bytes, expected " +
                                    std::to_string(need));
  }
  const auto payload = r.raw(need);
  if (binio::crc32(payload) != crc) fail(ErrorKind::Corruption, ctx + ": payload checksum mismatch");
  binio::Reader pr(payload, ErrorKind::Corruption, ctx);
  for (auto* t : params.tensors()) pr.f32s(t->values());
  return params;
}

void save_params(const EncoderParams<float>& params, const std::filesystem::path& path) {
  binio::write_file_atomic(path, encode_model(params));
}

EncoderParams<float> load_params(const std::filesystem::path& path) {
  return decode_model(binio::read_file(path), path.string());
}

}  // namespace ssmnet
