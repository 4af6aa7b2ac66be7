#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ssmnet/diffcore.hpp"
#include "ssmnet/frontend.hpp"
#include "ssmnet/tensor.hpp"

namespace ssmnet {

inline constexpr int kEmbeddingDim = 128;
inline constexpr int kConvKernelH = 6;  // frequency
inline constexpr int kConvKernelW = 4;  // time
inline constexpr std::array<std::array<int, 2>, 3> kPoolKernels{{{2, 4}, {3, 4}, {3, 2}}};
inline constexpr int kMaxNormGroups = 32;

struct ChannelPlan {
  int c1 = 32;
  int c2 = 64;
  int c3 = 128;

  std::array<int, 3> channels() const { return {c1, c2, c3}; }
  bool operator==(const ChannelPlan&) const = default;
};

/// Trainable parameter count of the default (32, 64, 128) plan: three conv
/// layers with biases, group-norm gamma/beta, and the 1024 -> 128 FC layer.
inline constexpr std::size_t kParameterCount = 378400;

inline int norm_groups(int channels) { return channels < kMaxNormGroups ? channels : kMaxNormGroups; }

std::size_t parameter_count(const ChannelPlan& plan);

/// Shapes after each conv block's pooling for a 72 x 64 patch: (36x16), (12x4), (4x2).
std::array<std::array<int, 2>, 3> pooled_sizes();

template <typename T>
struct EncoderParams {
  ChannelPlan plan;
  std::uint64_t seed = 0;
  std::array<Tensor<T>, 3> conv_weight;  // [c_out, c_in, 6, 4]
  std::array<Tensor<T>, 3> conv_bias;
  std::array<Tensor<T>, 3> norm_gamma;
  std::array<Tensor<T>, 3> norm_beta;
  Tensor<T> fc_weight;  // [128, 8 * c3]
  Tensor<T> fc_bias;

  /// Serialization and optimizer order: per block (weight, bias, gamma, beta), then fc weight, fc bias.
  std::vector<Tensor<T>*> tensors();
  std::vector<const Tensor<T>*> tensors() const;
  static std::vector<std::string> tensor_names();

  std::size_t count() const;

  /// Same shapes, all zeros.
  static EncoderParams zeros(const ChannelPlan& plan);

  template <typename U>
  EncoderParams<U> cast() const {
    EncoderParams<U> out;
    out.plan = plan;
    out.seed = seed;
    for (int l = 0; l < 3; ++l) {
      out.conv_weight[l] = conv_weight[l].template cast<U>();
      out.conv_bias[l] = conv_bias[l].template cast<U>();
      out.norm_gamma[l] = norm_gamma[l].template cast<U>();
      out.norm_beta[l] = norm_beta[l].template cast<U>();
    }
    out.fc_weight = fc_weight.template cast<U>();
    out.fc_bias = fc_bias.template cast<U>();
    return out;
  }

  bool operator==(const EncoderParams&) const = default;
};

extern template struct EncoderParams<float>;
extern template struct EncoderParams<double>;

/// Fan-in scaled normal weights (std = sqrt(2 / fan_in)), zero biases, gamma = 1, beta = 0.
EncoderParams<float> init_params(std::uint64_t seed, const ChannelPlan& plan = {});

/// One patch's computation graph. The tape references `params`, which must outlive it.
template <typename T>
struct PatchGraph {
  Tape<T> tape;
  std::vector<typename Tape<T>::Var> params;  // EncoderParams::tensors() order
  typename Tape<T>::Var input;
  typename Tape<T>::Var embedding;
  std::array<Shape, 3> pooled_shapes;
};

/// Records conv(6,4) -> SELU -> group norm -> max pool (x3), flatten, FC, SELU, L2 norm.
/// `patch` is 72 x 64 row-major. With `with_grad` false, no backward state is kept.
template <typename T>
void build_patch_graph(PatchGraph<T>& graph, const EncoderParams<T>& params, std::span<const T> patch,
                       bool with_grad, bool input_grad = false);

/// Embeddings of stacked patches ((T*72) x 64) as a T x 128 matrix.
template <typename T>
Matrix<T> encode_stacked(const Matrix<T>& stacked, const EncoderParams<T>& params);

struct EmbeddingSequence {
  std::string track_id;
  Matrix<float> vectors;  // T x dim, unit-norm rows

  std::size_t size() const { return vectors.rows(); }
};

EmbeddingSequence encode(const PatchSequence& patches, const EncoderParams<float>& params,
                         const std::string& track_id = {});

// SSMN: "SSMN", u32 version, u32 header length, JSON header, float32 LE parameters.
inline constexpr std::uint32_t kModelVersion = 1;

std::vector<std::uint8_t> encode_model(const EncoderParams<float>& params);
EncoderParams<float> decode_model(std::span<const std::uint8_t> bytes, const std::string& context = "SSMN");
void save_params(const EncoderParams<float>& params, const std::filesystem::path& path);
EncoderParams<float> load_params(const std::filesystem::path& path);

}  // namespace ssmnet
