#include "ssmnet/optim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>

#include <json.hpp>

#include "ssmnet/binio.hpp"
#include "ssmnet/error.hpp"
#include "ssmnet/log.hpp"
#include "ssmnet/objective.hpp"

namespace ssmnet {
namespace {

using nlohmann::json;

// Fisher-Yates with a plain modulo draw, so the permutation only depends on mt19937_64.
void shuffle_indices(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

std::uint64_t epoch_seed(std::uint64_t seed, int epoch) {
  return seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(epoch) + 1;
}

LossConfig training_loss(const TrainConfig& cfg) { return {cfg.loss_epsilon, LossNormalization::Mean}; }

template <typename T>
MadgradState<T> fresh_state(std::span<const std::span<T>> params) {
  MadgradState<T> s;
  for (const auto& p : params) {
    s.initial.emplace_back(p.begin(), p.end());
    s.grad_sum.emplace_back(p.size(), T(0));
    s.grad_sq_sum.emplace_back(p.size(), T(0));
  }
  return s;
}

json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"weight_decay", c.weight_decay},
          {"batch_tracks", c.batch_tracks},
          {"momentum", c.momentum},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"validation_fraction", c.validation_fraction},
          {"seed", c.seed},
          {"loss_epsilon", c.loss_epsilon},
          {"channel_plan", {c.plan.c1, c.plan.c2, c.plan.c3}}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.learning_rate = j.at("learning_rate").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.batch_tracks = j.at("batch_tracks").get<int>();
  c.momentum = j.at("momentum").get<double>();
  c.max_epochs = j.at("max_epochs").get<int>();
  c.patience = j.at("patience").get<int>();
  c.validation_fraction = j.at("validation_fraction").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.loss_epsilon = j.at("loss_epsilon").get<double>();
  const auto plan = j.at("channel_plan").get<std::vector<int>>();
  c.plan = {plan.at(0), plan.at(1), plan.at(2)};
  return c;
}

json to_json(const TrainHistory& h) {
  json epochs = json::array();
  for (const auto& e : h.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"val_loss", e.val_loss},
                      {"seconds", e.seconds},
                      {"steps", e.steps},
                      {"learning_rate", e.learning_rate},
                      {"improved", e.improved}});
  }
  return {{"initial_val_loss", h.initial_val_loss},
          {"best_epoch", h.best_epoch},
          {"best_val_loss", h.best_val_loss},
          {"epochs", epochs},
          {"notes", h.notes}};
}

TrainHistory history_from_json(const json& j) {
  TrainHistory h;
  h.initial_val_loss = j.at("initial_val_loss").get<double>();
  h.best_epoch = j.at("best_epoch").get<int>();
  h.best_val_loss = j.at("best_val_loss").get<double>();
  h.notes = j.at("notes").get<std::vector<std::string>>();
  for (const auto& e : j.at("epochs")) {
    EpochRecord r;
    r.epoch = e.at("epoch").get<int>();
    r.train_loss = e.at("train_loss").get<double>();
    r.val_loss = e.at("val_loss").get<double>();
    r.seconds = e.at("seconds").get<double>();
    r.steps = e.at("steps").get<int>();
    r.learning_rate = e.at("learning_rate").get<double>();
    r.improved = e.at("improved").get<bool>();
    h.epochs.push_back(r);
  }
  return h;
}

}  // namespace

template <typename T>
void madgrad_step(std::span<const std::span<T>> params, std::span<const std::span<const T>> grads,
                  MadgradState<T>& state, const MadgradConfig& cfg) {
  if (params.size() != grads.size()) fail(ErrorKind::Shape, "madgrad: parameter/gradient block count mismatch");
  for (std::size_t b = 0; b < grads.size(); ++b) {
    if (grads[b].size() != params[b].size()) fail(ErrorKind::Shape, "madgrad: gradient block size mismatch");
    for (std::size_t i = 0; i < grads[b].size(); ++i) {
      if (!std::isfinite(grads[b][i])) {
        fail(ErrorKind::Numerical, "madgrad: non-finite gradient in block " + std::to_string(b) + " at index " +
                                       std::to_string(i) + " (step " + std::to_string(state.step) + ")");
      }
    }
  }
  if (state.initial.empty()) {
    state = fresh_state<T>(params);
  } else if (state.initial.size() != params.size()) {
    fail(ErrorKind::Shape, "madgrad: optimizer state does not match parameters");
  }

  const T lambda = static_cast<T>(cfg.learning_rate * std::sqrt(double(state.step) + 1.0));
  const T ck = static_cast<T>(1.0 - cfg.momentum);
  const T wd = static_cast<T>(cfg.weight_decay);
  const T eps = static_cast<T>(cfg.eps);
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto x = params[b];
    auto g = grads[b];
    auto& x0 = state.initial[b];
    auto& s = state.grad_sum[b];
    auto& nu = state.grad_sq_sum[b];
    for (std::size_t i = 0; i < x.size(); ++i) {
      T gi = g[i];
      if (wd != T(0)) gi += wd * x[i];
      nu[i] += lambda * gi * gi;
      s[i] += lambda * gi;
      const T z = x0[i] - s[i] / (std::cbrt(nu[i]) + eps);
      x[i] += ck * (z - x[i]);
    }
  }
  ++state.step;
}

template void madgrad_step<float>(std::span<const std::span<float>>, std::span<const std::span<const float>>,
                                  MadgradState<float>&, const MadgradConfig&);
template void madgrad_step<double>(std::span<const std::span<double>>, std::span<const std::span<const double>>,
                                   MadgradState<double>&, const MadgradConfig&);

void madgrad_step(EncoderParams<float>& params, const EncoderParams<float>& grads, MadgradState<float>& state,
                  const MadgradConfig& cfg) {
  std::vector<std::span<float>> p;
  std::vector<std::span<const float>> g;
  for (auto* t : params.tensors()) p.push_back(t->values());
  for (const auto* t : grads.tensors()) g.push_back(t->values());
  madgrad_step<float>(p, g, state, cfg);
}

void validate(const TrainConfig& c) {
  if (!(c.learning_rate > 0.0)) fail(ErrorKind::Config, "learning_rate must be positive");
  if (!(c.weight_decay >= 0.0)) fail(ErrorKind::Config, "weight_decay must be non-negative");
  if (c.batch_tracks <= 0) fail(ErrorKind::Config, "batch_tracks must be positive");
  if (!(c.momentum >= 0.0 && c.momentum < 1.0)) fail(ErrorKind::Config, "momentum must lie in [0, 1)");
  if (c.max_epochs <= 0) fail(ErrorKind::Config, "max_epochs must be positive");
  if (c.patience < 0) fail(ErrorKind::Config, "patience must be non-negative");
  if (!(c.validation_fraction > 0.0 && c.validation_fraction < 0.5)) {
    fail(ErrorKind::Config, "validation_fraction must lie in (0, 0.5)");
  }
  validate(LossConfig{c.loss_epsilon, LossNormalization::Mean});
}

CorpusSplit split_corpus(std::size_t n, const TrainConfig& cfg) {
  if (n < 2) fail(ErrorKind::Validation, "training needs at least 2 tracks, got " + std::to_string(n));
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(cfg.seed ^ 0x5EEDC0FFEEull);
  shuffle_indices(idx, rng);
  auto n_val = static_cast<std::size_t>(std::ceil(cfg.validation_fraction * double(n)));
  n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
  CorpusSplit split;
  split.train.assign(idx.begin(), idx.end() - static_cast<std::ptrdiff_t>(n_val));
  split.validation.assign(idx.end() - static_cast<std::ptrdiff_t>(n_val), idx.end());
  return split;
}

double mean_track_loss(const EncoderParams<float>& params, const std::vector<TrainTrack>& corpus,
                       std::span<const std::size_t> tracks, const LossConfig& loss) {
  if (tracks.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t idx : tracks) {
    const auto& t = corpus.at(idx);
    sum += track_objective<float>(params, t.patches, t.truth, loss, nullptr).loss.per_pair_mean;
  }
  return sum / double(tracks.size());
}

double train_batch(TrainState& state, const std::vector<TrainTrack>& corpus, std::vector<std::size_t> batch,
                   const TrainConfig& cfg) {
  std::sort(batch.begin(), batch.end());
  auto grad = EncoderParams<float>::zeros(state.params.plan);
  const auto scale = static_cast<float>(1.0 / double(batch.size()));
  const LossConfig loss = training_loss(cfg);
  double total = 0.0;
  for (std::size_t idx : batch) {
    const auto& t = corpus.at(idx);
    total += track_objective<float>(state.params, t.patches, t.truth, loss, &grad, scale).loss.per_pair_mean;
  }
  madgrad_step(state.params, grad, state.optimizer, cfg.madgrad());
  return total / double(batch.size());
}

TrainState train(const std::vector<TrainTrack>& corpus, const TrainConfig& cfg, std::optional<TrainState> resume_from,
                 const EpochCallback& on_epoch) {
  validate(cfg);
  for (const auto& t : corpus) {
    if (t.size() < kMinBeats) {
      fail(ErrorKind::Validation, "track '" + t.id + "' has " + std::to_string(t.size()) + " patches (need at least " +
                                      std::to_string(kMinBeats) + ")");
    }
    if (t.truth.size() != t.size()) fail(ErrorKind::Validation, "track '" + t.id + "': ground truth size mismatch");
  }
  const CorpusSplit split = split_corpus(corpus.size(), cfg);
  if (std::size_t(cfg.batch_tracks) > split.train.size()) {
    fail(ErrorKind::Validation, "batch of " + std::to_string(cfg.batch_tracks) + " tracks exceeds the " +
                                    std::to_string(split.train.size()) + " training tracks");
  }
  const LossConfig loss = training_loss(cfg);

  TrainState state;
  if (resume_from) {
    state = std::move(*resume_from);
    if (!(state.params.plan == cfg.plan)) fail(ErrorKind::Config, "checkpoint channel plan differs from configuration");
    if (state.config.learning_rate != cfg.learning_rate) {
      state.history.notes.push_back("resumed after epoch " + std::to_string(state.epochs_done) + ": learning_rate " +
                                    binio::format_double(state.config.learning_rate) + " -> " +
                                    binio::format_double(cfg.learning_rate));
    }
    state.stopped = false;
  } else {
    state.params = init_params(cfg.seed, cfg.plan);
    state.best_params = state.params;
    state.history.initial_val_loss = mean_track_loss(state.params, corpus, split.validation, loss);
    state.history.best_val_loss = state.history.initial_val_loss;
    state.history.best_epoch = 0;
  }
  state.config = cfg;

  while (state.epochs_done < cfg.max_epochs) {
    const auto t0 = std::chrono::steady_clock::now();
    const int epoch = state.epochs_done + 1;
    std::vector<std::size_t> order = split.train;
    std::mt19937_64 rng(epoch_seed(cfg.seed, epoch));
    shuffle_indices(order, rng);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.learning_rate = cfg.learning_rate;
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += std::size_t(cfg.batch_tracks)) {
      const auto end = std::min(order.size(), b + std::size_t(cfg.batch_tracks));
      std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(b),
                                     order.begin() + static_cast<std::ptrdiff_t>(end));
      loss_sum += train_batch(state, corpus, std::move(batch), cfg);
      ++rec.steps;
    }
    rec.train_loss = loss_sum / rec.steps;
    rec.val_loss = mean_track_loss(state.params, corpus, split.validation, loss);
    rec.improved = rec.val_loss < state.history.best_val_loss;
    if (rec.improved) {
      state.history.best_val_loss = rec.val_loss;
      state.history.best_epoch = epoch;
      state.best_params = state.params;
      state.bad_epochs = 0;
    } else {
      ++state.bad_epochs;
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    state.history.epochs.push_back(rec);
    state.epochs_done = epoch;
    if (!rec.improved && state.bad_epochs >= cfg.patience) state.stopped = true;
    if (on_epoch) on_epoch(state, rec);
    if (state.stopped) break;
  }
  return state;
}

std::string history_json(const TrainHistory& history) { return to_json(history).dump(2) + "\n"; }

void checkpoint(const TrainState& state, const std::filesystem::path& path) {
  binio::Writer w;
  w.magic("SSMC");
  w.u32(kCheckpointVersion);
  const auto current = encode_model(state.params);
  const auto best = encode_model(state.best_params);
  w.u64(current.size());
  w.raw(current);
  w.u64(best.size());
  w.raw(best);
  w.u64(state.optimizer.step);
  const std::size_t n = state.params.count();
  w.u64(n);
  auto write_blocks = [&](const std::vector<std::vector<float>>& blocks) {
    std::size_t written = 0;
    for (const auto& b : blocks) {
      w.f32s(b);
      written += b.size();
    }
    for (; written < n; ++written) w.f32(0.0f);  // optimizer not started yet
  };
  write_blocks(state.optimizer.initial);
  write_blocks(state.optimizer.grad_sum);
  write_blocks(state.optimizer.grad_sq_sum);

  json meta;
  meta["history"] = to_json(state.history);
  meta["epochs_done"] = state.epochs_done;
  meta["bad_epochs"] = state.bad_epochs;
  meta["stopped"] = state.stopped;
  meta["optimizer_started"] = !state.optimizer.initial.empty();
  meta["config"] = to_json(state.config);
  const std::string text = meta.dump();
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.raw(text);
  binio::write_file_atomic(path, w.bytes());
}

TrainState resume(const std::filesystem::path& path) {
  const auto bytes = binio::read_file(path);
  const std::string ctx = path.string();
  binio::Reader r(bytes, ErrorKind::Corruption, ctx);
  if (!r.magic("SSMC")) fail(ErrorKind::Format, ctx + ": bad magic (expected SSMC)");
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    fail(ErrorKind::Version, ctx + ": checkpoint version " + std::to_string(version) + " is not supported");
  }
  TrainState state;
  const auto cur_len = r.u64();
  state.params = decode_model(r.raw(cur_len), ctx + " (current model)");
  const auto best_len = r.u64();
  state.best_params = decode_model(r.raw(best_len), ctx + " (best model)");
  if (!(state.best_params.plan == state.params.plan)) fail(ErrorKind::Corruption, ctx + ": channel plans disagree");
  state.optimizer.step = r.u64();
  const auto n = r.u64();
  if (n != state.params.count()) fail(ErrorKind::Corruption, ctx + ": optimizer size does not match the model");

  std::vector<std::vector<float>> blocks[3];
  for (auto& set : blocks) {
    for (const auto* t : state.params.tensors()) {
      std::vector<float> b(t->size());
      r.f32s(b);
      set.push_back(std::move(b));
    }
  }
  const auto meta_len = r.u32();
  const auto meta_bytes = r.raw(meta_len);
  try {
    const json meta = json::parse(meta_bytes.begin(), meta_bytes.end());
    state.history = history_from_json(meta.at("history"));
    state.epochs_done = meta.at("epochs_done").get<int>();
    state.bad_epochs = meta.at("bad_epochs").get<int>();
    state.stopped = meta.at("stopped").get<bool>();
    state.config = config_from_json(meta.at("config"));
    if (meta.at("optimizer_started").get<bool>()) {
      state.optimizer.initial = std::move(blocks[0]);
      state.optimizer.grad_sum = std::move(blocks[1]);
      state.optimizer.grad_sq_sum = std::move(blocks[2]);
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Corruption, ctx + ": bad metadata: " + e.what());
  }
  return state;
}

}  // namespace ssmnet
