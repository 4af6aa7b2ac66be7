#include "cli.hpp"

#include <omp.h>

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <optional>

#include "ssmnet/binio.hpp"
#include "ssmnet/config.hpp"
#include "ssmnet/corpus.hpp"
#include "ssmnet/error.hpp"
#include "ssmnet/eval.hpp"
#include "ssmnet/frontend.hpp"
#include "ssmnet/gradchecks.hpp"
#include "ssmnet/log.hpp"
#include "ssmnet/optim.hpp"
#include "ssmnet/synthgen.hpp"

namespace ssmnet::cli {
namespace {

namespace fs = std::filesystem;

// Errors about the corpus contents map to 3; numerical failures to 4; the rest are usage/input.
int exit_code(const Error& e, bool corpus_command) {
  switch (e.kind()) {
    case ErrorKind::Numerical: return kNumerical;
    case ErrorKind::Validation:
    case ErrorKind::TooShort:
    case ErrorKind::Degenerate:
    case ErrorKind::EmptyInput:
    case ErrorKind::UndefinedAuc:
    case ErrorKind::Shape: return corpus_command ? kCorpus : kUsage;
    default: return kUsage;
  }
}

fs::path sibling(const fs::path& p, const std::string& suffix) {
  fs::path out = p;
  out.replace_extension();
  out += suffix;
  return out;
}

struct Common {
  std::string config_path;
  int jobs = 0;
};

CliConfig base_config(const Common& c) {
  return c.config_path.empty() ? CliConfig{} : load_cli_config(c.config_path);
}

void apply_jobs(const Common& c) {
  if (c.jobs > 0) omp_set_num_threads(c.jobs);
}

struct ExtractArgs {
  std::string audio, beats, out;
  std::optional<double> beat_period;
};

int cmd_extract(const Common& common, const ExtractArgs& a) {
  const CliConfig cfg = base_config(common);
  if (a.beats.empty() && !a.beat_period) {
    std::cerr << "extract: give --beats FILE or --beat-period SECONDS\n";
    return kUsage;
  }
  AudioBuffer audio = read_wav(a.audio);
  if (audio.sample_rate != cfg.cqt.sample_rate) audio = decimate(audio, cfg.cqt.sample_rate);
  BeatGrid beats;
  if (!a.beats.empty()) {
    beats = read_beats(a.beats);
  } else {
    beats = uniform_beats(audio.duration(), *a.beat_period);
    log_info("extract: no beats file; using uniform beats every " + binio::format_double(*a.beat_period) + " s");
  }
  const CqtMatrix cqt = compute_cqt(audio, cfg.cqt);
  const PatchSequence patches = assemble_patches(subdivide_beats(cqt, beats), beats);
  const fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_patches(out, patches);
  log_info("extract: wrote " + std::to_string(patches.size()) + " patches to " + out.string());
  return kOk;
}

struct TrainArgs {
  std::string manifest, out_model, checkpoint_dir, resume;
  std::optional<double> lr, weight_decay, momentum, validation_fraction;
  std::optional<int> batch_tracks, max_epochs, patience;
  std::optional<std::uint64_t> seed;
};

int cmd_train(const Common& common, const TrainArgs& a) {
  CliConfig cfg = base_config(common);
  if (!a.manifest.empty()) cfg.paths.manifest = a.manifest;
  if (!a.out_model.empty()) cfg.paths.out_model = a.out_model;
  if (!a.checkpoint_dir.empty()) cfg.paths.checkpoint_dir = a.checkpoint_dir;
  if (a.lr) cfg.train.learning_rate = *a.lr;
  if (a.weight_decay) cfg.train.weight_decay = *a.weight_decay;
  if (a.momentum) cfg.train.momentum = *a.momentum;
  if (a.validation_fraction) cfg.train.validation_fraction = *a.validation_fraction;
  if (a.batch_tracks) cfg.train.batch_tracks = *a.batch_tracks;
  if (a.max_epochs) cfg.train.max_epochs = *a.max_epochs;
  if (a.patience) cfg.train.patience = *a.patience;
  if (a.seed) cfg.train.seed = *a.seed;
  if (cfg.paths.manifest.empty() || cfg.paths.out_model.empty()) {
    std::cerr << "train: --manifest and --out-model are required (flag or config paths)\n";
    return kUsage;
  }
  validate(cfg.train);

  std::vector<TrainTrack> corpus;
  for (auto& t : load_corpus(read_manifest(cfg.paths.manifest))) {
    corpus.push_back({t.id, std::move(t.patches.data), std::move(t.truth)});
  }
  std::optional<TrainState> start;
  if (!a.resume.empty()) {
    start = resume(a.resume);
    log_info("train: resuming after epoch " + std::to_string(start->epochs_done));
  }

  const fs::path model(cfg.paths.out_model);
  if (model.has_parent_path()) fs::create_directories(model.parent_path());
  fs::path ckpt;
  if (!cfg.paths.checkpoint_dir.empty()) {
    fs::create_directories(cfg.paths.checkpoint_dir);
    ckpt = fs::path(cfg.paths.checkpoint_dir) / "checkpoint.ssmc";
  }
  binio::write_file_atomic(sibling(model, ".config.json"), cli_config_json(cfg));

  auto on_epoch = [&](const TrainState& s, const EpochRecord& r) {
    log_info("epoch " + std::to_string(r.epoch) + ": train_loss " + binio::format_double(r.train_loss) +
             " val_loss " + binio::format_double(r.val_loss) + (r.improved ? " *" : ""));
    if (!ckpt.empty()) checkpoint(s, ckpt);
  };
  const TrainState state = train(corpus, cfg.train, std::move(start), on_epoch);
  save_params(state.best_params, model);
  binio::write_file_atomic(sibling(model, ".history.json"), history_json(state.history));
  log_info("train: best epoch " + std::to_string(state.history.best_epoch) + ", val_loss " +
           binio::format_double(state.history.best_val_loss) + "; model written to " + model.string());
  return kOk;
}

struct EvalArgs {
  std::string manifest, variant, model, report, summary, render_dir;
  std::optional<std::uint64_t> seed;
};

int cmd_eval(const Common& common, const EvalArgs& a) {
  CliConfig cfg = base_config(common);
  if (!a.manifest.empty()) cfg.paths.manifest = a.manifest;
  if (!a.report.empty()) cfg.paths.report = a.report;
  if (!a.render_dir.empty()) cfg.paths.render_dir = a.render_dir;
  if (a.seed) cfg.train.seed = *a.seed;
  if (cfg.paths.manifest.empty() || cfg.paths.report.empty()) {
    std::cerr << "eval: --manifest and --report are required (flag or config paths)\n";
    return kUsage;
  }
  VariantSpec spec;
  spec.variant = parse_variant(a.variant);
  spec.seed = cfg.train.seed;
  if (spec.variant == FeatureVariant::Ssmnet) {
    if (a.model.empty()) {
      std::cerr << "eval: variant ssmnet needs --model\n";
      return kUsage;
    }
    spec.params = load_params(a.model);
  }
  std::optional<fs::path> render;
  if (!cfg.paths.render_dir.empty()) render = fs::path(cfg.paths.render_dir);
  const CorpusReport report = evaluate_corpus(read_manifest(cfg.paths.manifest), spec, render);

  const fs::path csv(cfg.paths.report);
  if (csv.has_parent_path()) fs::create_directories(csv.parent_path());
  binio::write_file_atomic(csv, report_csv(report.rows));
  const fs::path summary = a.summary.empty() ? sibling(csv, ".summary.json") : fs::path(a.summary);
  binio::write_file_atomic(summary, summary_json(report));
  const auto auc = report.auc_summary();
  const auto loss = report.loss_summary();
  log_info(std::string("eval ") + to_string(spec.variant) + ": " + std::to_string(report.rows.size()) + " tracks, " +
           std::to_string(report.failures()) + " failed; median loss " + binio::format_double(loss.median) +
           ", median auc " + binio::format_double(auc.median));
  return kOk;
}

struct SynthArgs {
  std::size_t n = 24;
  std::uint64_t seed = 0;
  std::string out_dir;
  SynthConfig base;
};

int cmd_synth(const Common&, const SynthArgs& a) {
  const auto entries = gen_corpus(a.n, a.base, a.seed, a.out_dir);
  log_info("synth: wrote " + std::to_string(entries.size()) + " tracks and manifest.json to " + a.out_dir);
  return kOk;
}

struct GradcheckArgs {
  std::uint64_t seed = 0;
  double tolerance = 1e-4;
  std::size_t tracks = 6;
  std::size_t coords = 4;
};

int cmd_gradcheck(const Common&, const GradcheckArgs& a) {
  GradcheckOptions opts;
  opts.tolerance = a.tolerance;
  auto results = primitive_gradchecks(a.seed, opts);
  opts.step = kCompositeStep;
  results.push_back(composite_gradcheck(a.tracks, a.seed, a.coords, opts));
  bool ok = true;
  for (const auto& r : results) {
    std::cout << r.name << ": max_rel_error " << binio::format_double(r.report.max_rel_error) << " (checked "
              << r.report.checked << ", skipped " << r.report.skipped << ") "
              << (r.report.passed ? "ok" : "FAIL") << "\n";
    ok = ok && r.report.passed;
  }
  return ok ? kOk : kNumerical;
}

}  // namespace

int run(std::vector<std::string> args) {
  CLI::App app{"Learn and evaluate beat-synchronous audio embeddings whose self-similarity matrix matches annotated "
               "structure.",
               "ssmnet"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "JSON config (train/cqt/loss/paths); flags take precedence")
        ->check(CLI::ExistingFile);
    sub->add_option("--jobs", common.jobs, "Maximum worker threads (0 = OpenMP default)")->check(CLI::NonNegativeNumber);
  };

  ExtractArgs ex;
  auto* extract = app.add_subcommand("extract", "Audio (WAV) + beats -> beat-synchronous CQT patches (.ssmf + .json)");
  extract->add_option("--audio", ex.audio, "Input WAV file (16-bit PCM or 32-bit float)")->required();
  extract->add_option("--beats", ex.beats, "Beat times, one per line in seconds");
  extract->add_option("--beat-period", ex.beat_period, "Uniform beat period in seconds when no beats file is given");
  extract->add_option("--out", ex.out, "Output .ssmf path; the sidecar .json is written next to it")->required();
  add_common(extract);

  TrainArgs tr;
  auto* trainc = app.add_subcommand("train", "Train the encoder on a manifest of tracks");
  trainc->add_option("--manifest", tr.manifest, "Manifest JSON (default: paths.manifest)");
  trainc->add_option("--out-model", tr.out_model, "Output model (.ssmn); history and config JSON go next to it");
  trainc->add_option("--checkpoint-dir", tr.checkpoint_dir, "Write checkpoint.ssmc here after every epoch");
  trainc->add_option("--resume", tr.resume, "Continue from a checkpoint file");
  trainc->add_option("--lr", tr.lr, "Learning rate (default 5e-4)");
  trainc->add_option("--weight-decay", tr.weight_decay, "Weight decay (default 1e-2)");
  trainc->add_option("--momentum", tr.momentum, "MADGRAD momentum (default 0.9)");
  trainc->add_option("--batch-tracks", tr.batch_tracks, "Full tracks per optimizer step (default 6)");
  trainc->add_option("--max-epochs", tr.max_epochs, "Epoch limit (default 100)");
  trainc->add_option("--patience", tr.patience, "Early-stopping patience in epochs (default 10)");
  trainc->add_option("--validation-fraction", tr.validation_fraction, "Held-out fraction of tracks (default 0.1)");
  trainc->add_option("--seed", tr.seed, "Seed for initialization, split and shuffles (default 0)");
  add_common(trainc);

  EvalArgs ev;
  auto* evalc = app.add_subcommand("eval", "Score a feature variant (Loss, AUC) per track");
  evalc->add_option("--manifest", ev.manifest, "Manifest JSON (default: paths.manifest)");
  evalc->add_option("--variant", ev.variant, "cqt, convnet or ssmnet")
      ->required()
      ->check(CLI::IsMember({"cqt", "convnet", "ssmnet"}));
  evalc->add_option("--model", ev.model, "Trained model (.ssmn), required for ssmnet");
  evalc->add_option("--report", ev.report, "Output CSV report (default: paths.report)");
  evalc->add_option("--summary", ev.summary, "Output summary JSON (default: <report>.summary.json)");
  evalc->add_option("--render-dir", ev.render_dir, "Write <track>_<variant>.pgm and <track>_gt.pgm here");
  evalc->add_option("--seed", ev.seed, "Seed of the random-weight convnet baseline (default: train.seed)");
  add_common(evalc);

  SynthArgs sy;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus with a manifest");
  synth->add_option("--n", sy.n, "Number of tracks (default 24)")->check(CLI::PositiveNumber);
  synth->add_option("--seed", sy.seed, "Corpus seed; track i uses seed + i (default 0)");
  synth->add_option("--out-dir", sy.out_dir, "Output directory")->required();
  synth->add_option("--sigma", sy.base.sigma, "Gaussian noise level (default 0)");
  synth->add_option("--beats-per-section", sy.base.beats_per_section, "Beats per section (default 6)");
  synth->add_option("--beat-period", sy.base.beat_period, "Beat period in seconds (default 0.5)");
  synth->add_option("--frames-per-beat", sy.base.frames_per_beat, "CQT frames per beat (default 16)");
  synth->add_option("--peaks", sy.base.template_peaks, "Harmonic peaks per template (default 6)");
  add_common(synth);

  GradcheckArgs gc;
  auto* gradc = app.add_subcommand("gradcheck", "Finite-difference check of every primitive and the full loss");
  gradc->add_option("--seed", gc.seed, "Seed (default 0)");
  gradc->add_option("--tolerance", gc.tolerance, "Maximum relative error (default 1e-4)");
  gradc->add_option("--tracks", gc.tracks, "Patches in the composite check (default 6)")->check(CLI::Range(2, 64));
  gradc->add_option("--coords", gc.coords, "Probed coordinates per parameter tensor (default 4)");
  add_common(gradc);

  std::vector<std::string> argv_tail(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(argv_tail.begin(), argv_tail.end());
  try {
    app.parse(argv_tail);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  const bool corpus_command = trainc->parsed() || evalc->parsed();
  try {
    apply_jobs(common);
    if (extract->parsed()) return cmd_extract(common, ex);
    if (trainc->parsed()) return cmd_train(common, tr);
    if (evalc->parsed()) return cmd_eval(common, ev);
    if (synth->parsed()) return cmd_synth(common, sy);
    if (gradc->parsed()) return cmd_gradcheck(common, gc);
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.kind()) << ": " << e.what() << "\n";
    return exit_code(e, corpus_command);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}

}  // namespace ssmnet::cli
