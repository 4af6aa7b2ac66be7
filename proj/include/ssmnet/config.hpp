#pragma once

#include <filesystem>
#include <string>

#include "ssmnet/frontend.hpp"
#include "ssmnet/loss.hpp"
#include "ssmnet/optim.hpp"

namespace ssmnet {

struct PathConfig {
  std::string manifest;
  std::string out_model;
  std::string checkpoint_dir;
  std::string report;
  std::string render_dir;
};

// Mirrors the JSON config file:
// {"train": {...}, "cqt": {...}, "loss": {"epsilon_clip"}, "paths": {...}}.
// Every section and key is optional; unknown keys are a Config error.
struct CliConfig {
  TrainConfig train;
  CqtConfig cqt;
  LossConfig loss;
  PathConfig paths;
};

/// Overlays `text` onto `base`.
CliConfig parse_cli_config(const std::string& text, const CliConfig& base = {}, const std::string& context = "config");
CliConfig load_cli_config(const std::filesystem::path& path, const CliConfig& base = {});

/// Fully resolved config, every key present.
std::string cli_config_json(const CliConfig& cfg);

}  // namespace ssmnet
