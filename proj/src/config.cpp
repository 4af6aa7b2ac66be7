#include "ssmnet/config.hpp"

#include <json.hpp>
#include <set>

#include "ssmnet/binio.hpp"
#include "ssmnet/error.hpp"

namespace ssmnet {
namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) fail(ErrorKind::Config, where + " must be a JSON object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) fail(ErrorKind::Config, "unknown key '" + key + "' in " + where);
  }
}

template <typename V>
void take(const json& obj, const char* key, V& out) {
  if (obj.contains(key)) out = obj.at(key).get<V>();
}

}  // namespace

CliConfig parse_cli_config(const std::string& text, const CliConfig& base, const std::string& context) {
  CliConfig cfg = base;
  try {
    const json doc = json::parse(text);
    check_keys(doc, {"train", "cqt", "loss", "paths"}, context);
    if (doc.contains("train")) {
      const auto& t = doc.at("train");
      check_keys(t, {"learning_rate", "weight_decay", "batch_tracks", "momentum", "max_epochs", "patience",
                     "validation_fraction", "seed", "channel_plan"},
                 context + ".train");
      take(t, "learning_rate", cfg.train.learning_rate);
      take(t, "weight_decay", cfg.train.weight_decay);
      take(t, "batch_tracks", cfg.train.batch_tracks);
      take(t, "momentum", cfg.train.momentum);
      take(t, "max_epochs", cfg.train.max_epochs);
      take(t, "patience", cfg.train.patience);
      take(t, "validation_fraction", cfg.train.validation_fraction);
      take(t, "seed", cfg.train.seed);
      if (t.contains("channel_plan")) {
        const auto plan = t.at("channel_plan").get<std::vector<int>>();
        if (plan.size() != 3) fail(ErrorKind::Config, context + ".train.channel_plan needs 3 entries");
        cfg.train.plan = {plan[0], plan[1], plan[2]};
      }
    }
    if (doc.contains("cqt")) {
      const auto& c = doc.at("cqt");
      check_keys(c, {"sample_rate", "hop", "f_min", "n_bins", "bins_per_octave", "top_db"}, context + ".cqt");
      take(c, "sample_rate", cfg.cqt.sample_rate);
      take(c, "hop", cfg.cqt.hop);
      take(c, "f_min", cfg.cqt.f_min);
      take(c, "n_bins", cfg.cqt.n_bins);
      take(c, "bins_per_octave", cfg.cqt.bins_per_octave);
      take(c, "top_db", cfg.cqt.top_db);
    }
    if (doc.contains("loss")) {
      const auto& l = doc.at("loss");
      check_keys(l, {"epsilon_clip"}, context + ".loss");
      take(l, "epsilon_clip", cfg.loss.epsilon_clip);
    }
    if (doc.contains("paths")) {
      const auto& p = doc.at("paths");
      check_keys(p, {"manifest", "out_model", "checkpoint_dir", "report", "render_dir"}, context + ".paths");
      take(p, "manifest", cfg.paths.manifest);
      take(p, "out_model", cfg.paths.out_model);
      take(p, "checkpoint_dir", cfg.paths.checkpoint_dir);
      take(p, "report", cfg.paths.report);
      take(p, "render_dir", cfg.paths.render_dir);
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, context + ": " + e.what());
  }
  cfg.train.loss_epsilon = cfg.loss.epsilon_clip;
  return cfg;
}

CliConfig load_cli_config(const std::filesystem::path& path, const CliConfig& base) {
  const auto bytes = binio::read_file(path);
  return parse_cli_config(std::string(bytes.begin(), bytes.end()), base, path.string());
}

std::string cli_config_json(const CliConfig& cfg) {
  const auto& t = cfg.train;
  const auto& c = cfg.cqt;
  json j;
  j["train"] = {{"learning_rate", t.learning_rate},
                {"weight_decay", t.weight_decay},
                {"batch_tracks", t.batch_tracks},
                {"momentum", t.momentum},
                {"max_epochs", t.max_epochs},
                {"patience", t.patience},
                {"validation_fraction", t.validation_fraction},
                {"seed", t.seed},
                {"channel_plan", {t.plan.c1, t.plan.c2, t.plan.c3}}};
  j["cqt"] = {{"sample_rate", c.sample_rate}, {"hop", c.hop},
              {"f_min", c.f_min},             {"n_bins", c.n_bins},
              {"bins_per_octave", c.bins_per_octave}, {"top_db", c.top_db}};
  j["loss"] = {{"epsilon_clip", cfg.loss.epsilon_clip}};
  j["paths"] = {{"manifest", cfg.paths.manifest},
                {"out_model", cfg.paths.out_model},
                {"checkpoint_dir", cfg.paths.checkpoint_dir},
                {"report", cfg.paths.report},
                {"render_dir", cfg.paths.render_dir}};
  return j.dump(2) + "\n";
}

}  // namespace ssmnet
