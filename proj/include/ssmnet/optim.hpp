#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ssmnet/encoder.hpp"
#include "ssmnet/loss.hpp"
#include "ssmnet/ssm.hpp"

namespace ssmnet {

struct MadgradConfig {
  double learning_rate = 5e-4;
  double momentum = 0.9;
  double weight_decay = 1e-2;
  double eps = 1e-6;
};

/// Dual-averaging state: gradient sums s, squared-gradient sums nu, the
/// starting point x0, and the step counter k. One entry per parameter block.
template <typename T>
struct MadgradState {
  std::vector<std::vector<T>> initial;
  std::vector<std::vector<T>> grad_sum;
  std::vector<std::vector<T>> grad_sq_sum;
  std::uint64_t step = 0;

  bool operator==(const MadgradState&) const = default;
};

/// One MADGRAD update:
///   g += wd * x;  lambda = lr * sqrt(k + 1)
///   s += lambda g;  nu += lambda g^2;  z = x0 - s / (cbrt(nu) + eps)
///   x += (1 - momentum) (z - x)
/// Throws ErrorKind::Numerical (and leaves everything untouched) on a non-finite gradient.
template <typename T>
void madgrad_step(std::span<const std::span<T>> params, std::span<const std::span<const T>> grads,
                  MadgradState<T>& state, const MadgradConfig& cfg);

void madgrad_step(EncoderParams<float>& params, const EncoderParams<float>& grads, MadgradState<float>& state,
                  const MadgradConfig& cfg);

struct TrainConfig {
  double learning_rate = 5e-4;
  double weight_decay = 1e-2;
  int batch_tracks = 6;
  double momentum = 0.9;
  int max_epochs = 100;
  int patience = 10;
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;
  double loss_epsilon = 1e-6;
  ChannelPlan plan;

  MadgradConfig madgrad() const { return {learning_rate, momentum, weight_decay, 1e-6}; }
};

void validate(const TrainConfig& cfg);

struct TrainTrack {
  std::string id;
  Matrix<float> patches;  // (T*72) x 64
  BinarySSM truth;

  std::size_t size() const { return patches.rows() / kCqtBins; }
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double seconds = 0.0;
  int steps = 0;
  double learning_rate = 0.0;
  bool improved = false;
};

struct TrainHistory {
  double initial_val_loss = 0.0;
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;  // 0 = the untrained parameters
  double best_val_loss = 0.0;
  std::vector<std::string> notes;
};

struct CorpusSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// Seeded shuffle of track indices; the last ceil(validation_fraction * N) go to validation.
CorpusSplit split_corpus(std::size_t n_tracks, const TrainConfig& cfg);

struct TrainState {
  EncoderParams<float> params;
  EncoderParams<float> best_params;
  MadgradState<float> optimizer;
  TrainHistory history;
  int epochs_done = 0;
  int bad_epochs = 0;
  bool stopped = false;
  TrainConfig config;  // configuration of the most recent epoch
};

/// Mean over `tracks` of each track's per-pair mean loss.
double mean_track_loss(const EncoderParams<float>& params, const std::vector<TrainTrack>& corpus,
                       std::span<const std::size_t> tracks, const LossConfig& loss);

/// One optimizer step on a batch: batch loss = mean over tracks of per-track mean loss.
/// Gradients are reduced in ascending track-index order. Returns the batch loss.
double train_batch(TrainState& state, const std::vector<TrainTrack>& corpus, std::vector<std::size_t> batch,
                   const TrainConfig& cfg);

using EpochCallback = std::function<void(const TrainState&, const EpochRecord&)>;

/// Runs epochs until max_epochs or early stopping (no validation improvement for
/// `patience` epochs). The trained result is `best_params`.
TrainState train(const std::vector<TrainTrack>& corpus, const TrainConfig& cfg,
                 std::optional<TrainState> resume_from = std::nullopt, const EpochCallback& on_epoch = {});

// SSMC: "SSMC", u32 version, u64 + SSMN current params, u64 + SSMN best params,
// u64 step, u64 n, 3n float32 (x0, s, nu), u32 + JSON (history, counters, config).
inline constexpr std::uint32_t kCheckpointVersion = 1;

void checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState resume(const std::filesystem::path& path);

std::string history_json(const TrainHistory& history);

}  // namespace ssmnet
