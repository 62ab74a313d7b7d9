#pragma once

// Command-line wiring: synth, train, eval, ablate, and baseline-cca
// subcommands over the dataset, model, trainer, CCA, and evaluation modules.
// Every subcommand reads optional --config key=value files (explicit flags
// win) and writes its fully resolved configuration before any compute.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "avret/cca.hpp"
#include "avret/data.hpp"
#include "avret/eval.hpp"
#include "avret/losses.hpp"
#include "avret/model.hpp"
#include "avret/optim.hpp"

namespace avret::cli {

struct SynthFlags {
  std::string out;
  SyntheticSpec spec;
  std::string format = "binary";
  std::string normalize = "none";
};

struct TrainFlags {
  std::string train_manifest;
  std::string out;
  std::size_t hidden = 512;
  std::size_t latent = 64;
  std::string activation = "tanh";
  TrainRunConfig run;
};

struct EvalFlags {
  std::string checkpoint;
  std::string test_manifest;
  std::string out;
};

struct AblateFlags {
  TrainFlags train;
  std::string test_manifest;
};

struct CcaFlags {
  std::string train_manifest;
  std::string test_manifest;
  std::string out;
  std::size_t k = 0;    // 0 picks min(d_audio, d_visual) capped by rows-1
  double ridge = -1.0;  // negative defers to the solver default
};

namespace detail {

inline std::string trim_ws(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::string strip_quotes(std::string v) {
  if (v.size() >= 2 &&
      ((v.front() == '"' && v.back() == '"') || (v.front() == '\'' && v.back() == '\'')))
    return v.substr(1, v.size() - 2);
  return v;
}

// key=value config files: blank lines and #-comments ignored, quotes around
// values stripped, so a previously written config.resolved reloads as-is.
inline std::vector<std::pair<std::string, std::string>> read_config_pairs(
    const std::string& path) {
  std::ifstream in = avret::detail::open_in(path, std::ios::in);
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim_ws(line);
    if (t.empty() || t[0] == '#') continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key=value");
    std::string key = trim_ws(t.substr(0, eq));
    if (key.empty())
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": empty key");
    pairs.emplace_back(key, strip_quotes(trim_ws(t.substr(eq + 1))));
  }
  return pairs;
}

// Applies config-file pairs as defaults: every key the command line does not
// mention is appended as --key=value, so explicit flags always win. Unknown
// keys surface as ordinary unknown-option parse errors.
inline std::vector<std::string> merge_config_args(std::vector<std::string> args) {
  std::string config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size())
      config_path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0)
      config_path = args[i].substr(9);
  }
  if (config_path.empty()) return args;

  std::set<std::string> given;
  for (const std::string& a : args) {
    if (a.rfind("--", 0) != 0 || a.size() <= 2) continue;
    std::size_t eq = a.find('=');
    given.insert(a.substr(2, eq == std::string::npos ? std::string::npos : eq - 2));
  }
  std::map<std::string, std::string> defaults;  // later lines override earlier ones
  for (auto& [key, value] : read_config_pairs(config_path)) defaults[key] = value;
  for (const auto& [key, value] : defaults) {
    if (key == "config" || given.count(key)) continue;
    args.push_back("--" + key + "=" + value);
  }
  return args;
}

inline Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "identity") return Activation::identity;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  auto out = avret::detail::open_out(path, std::ios::binary);
  out << text;
}

// Per-dimension standardization fitted on the train split only. The stats
// ride along in checkpoints so evaluation can reuse them without touching
// test statistics.
struct NormStats {
  bool active = false;
  ZScoreStats visual;
  ZScoreStats audio;
};

inline NormStats fit_and_apply_norm(PairedDataset& train, bool enabled) {
  NormStats ns;
  if (!enabled) return ns;
  ns.active = true;
  ns.visual = fit_zscore(train.visual);
  ns.audio = fit_zscore(train.audio);
  apply_zscore(train.visual, ns.visual);
  apply_zscore(train.audio, ns.audio);
  return ns;
}

inline void apply_norm(PairedDataset& ds, const NormStats& ns) {
  if (!ns.active) return;
  apply_zscore(ds.visual, ns.visual);
  apply_zscore(ds.audio, ns.audio);
}

inline std::map<std::string, Tensor> norm_extras(const NormStats& ns) {
  std::map<std::string, Tensor> extra;
  if (!ns.active) return extra;
  auto row = [](const std::vector<double>& v) { return Tensor::from_data(1, v.size(), v); };
  extra["zscore_visual_mean"] = row(ns.visual.mean);
  extra["zscore_visual_std"] = row(ns.visual.stdev);
  extra["zscore_audio_mean"] = row(ns.audio.mean);
  extra["zscore_audio_std"] = row(ns.audio.stdev);
  return extra;
}

inline NormStats norm_from_extras(const std::map<std::string, Tensor>& extra) {
  NormStats ns;
  if (extra.find("zscore_visual_mean") == extra.end()) return ns;
  ns.active = true;
  auto vec = [&](const char* name) {
    auto it = extra.find(name);
    if (it == extra.end())
      throw std::runtime_error(std::string("checkpoint is missing the ") + name + " statistics");
    return it->second.data();
  };
  ns.visual.mean = vec("zscore_visual_mean");
  ns.visual.stdev = vec("zscore_visual_std");
  ns.audio.mean = vec("zscore_audio_mean");
  ns.audio.stdev = vec("zscore_audio_std");
  return ns;
}

inline void write_history_csv(const std::filesystem::path& path,
                              const std::vector<LossReport>& history, int pretrain_epochs) {
  auto out = avret::detail::open_out(path, std::ios::binary);
  out << "epoch,phase,rec,kl,vae,corr,dist,discr,center,total\n";
  for (std::size_t e = 0; e < history.size(); ++e) {
    const LossReport& r = history[e];
    const char* phase = static_cast<int>(e) < pretrain_epochs ? "pretrain" : "full";
    out << e << ',' << phase;
    for (double v : {r.rec, r.kl, r.vae, r.corr, r.dist, r.discr, r.center, r.total})
      out << ',' << avret::detail::fmt_double(v);
    out << '\n';
  }
}

struct TrainOutcome {
  ModelParams params;
  std::vector<LossReport> history;
  NormStats norm;
};

// Shared by the train and ablate subcommands: loads the manifest, fits
// normalization, trains both stages, and writes model.ckpt plus
// loss_history.csv (and periodic model_epoch_N.ckpt snapshots) under f.out.
inline TrainOutcome train_run(const TrainFlags& f, bool quiet = false) {
  Manifest manifest = read_manifest(f.train_manifest);
  PairedDataset train = load_dataset(f.train_manifest);
  NormStats norm = fit_and_apply_norm(train, manifest.zscore);

  ModelConfig mc;
  mc.d_visual = manifest.d_visual;
  mc.d_audio = manifest.d_audio;
  mc.hidden = f.hidden;
  mc.latent = f.latent;
  mc.classes = static_cast<std::size_t>(manifest.classes);
  mc.activation = parse_activation(f.activation);
  mc.validate();
  f.run.validate(train.size());

  std::filesystem::create_directories(f.out);
  TrainOutcome outcome{init_model(mc, f.run.seed), {}, norm};
  std::map<std::string, Tensor> extras = norm_extras(norm);

  TrainHooks hooks;
  int total_epochs = f.run.pretrain_epochs + f.run.full_epochs;
  hooks.on_epoch = [&](TrainPhase phase, int, int global, const LossReport& r) {
    if (quiet) return;
    std::cerr << (phase == TrainPhase::pretrain ? "pretrain" : "full") << " epoch " << global + 1
              << "/" << total_epochs << " total=" << r.total << " rec=" << r.rec << "\n";
  };
  hooks.on_checkpoint = [&](int global_epoch, ModelParams& p) {
    std::string name = "model_epoch_" + std::to_string(global_epoch + 1) + ".ckpt";
    save_checkpoint(std::filesystem::path(f.out) / name, p, extras);
  };
  outcome.history = train_two_stage(outcome.params, train, f.run, &hooks);

  save_checkpoint(std::filesystem::path(f.out) / "model.ckpt", outcome.params, extras);
  write_history_csv(std::filesystem::path(f.out) / "loss_history.csv", outcome.history,
                    f.run.pretrain_epochs);
  return outcome;
}

// Embeds the test split with a checkpointed model and writes the full
// report set into eval_dir.
inline EvalReport eval_to_dir(const CheckpointContents& ck, const std::string& test_manifest,
                              const std::filesystem::path& eval_dir) {
  Manifest manifest = read_manifest(test_manifest);
  const ModelConfig& mc = ck.params.config;
  if (manifest.d_visual != mc.d_visual || manifest.d_audio != mc.d_audio ||
      static_cast<std::size_t>(manifest.classes) != mc.classes)
    throw std::runtime_error(
        "checkpoint expects d_visual=" + std::to_string(mc.d_visual) +
        ", d_audio=" + std::to_string(mc.d_audio) + ", classes=" + std::to_string(mc.classes) +
        " but " + test_manifest + " declares d_visual=" + std::to_string(manifest.d_visual) +
        ", d_audio=" + std::to_string(manifest.d_audio) +
        ", classes=" + std::to_string(manifest.classes));

  PairedDataset test = load_dataset(test_manifest);
  NormStats norm = norm_from_extras(ck.extra);
  if (manifest.zscore && !norm.active)
    throw std::runtime_error(test_manifest +
                             " asks for z-scoring but the checkpoint carries no train statistics");
  apply_norm(test, norm);

  Tensor emb_a = embed_for_retrieval(ck.params, to_tensor(test.audio), Modality::audio);
  Tensor emb_v = embed_for_retrieval(ck.params, to_tensor(test.visual), Modality::visual);
  EvalReport report = evaluate_retrieval(emb_a, emb_v, test.labels.ids, manifest.classes);
  write_eval_report(eval_dir.string(), report);
  return report;
}

// Ablation arms: the single-loss arms drop the classifier gate and keep only
// their own regularizer (the VAE backbone always trains).
inline LossWeights arm_weights(const std::string& arm) {
  LossWeights w;
  if (arm == "full") return w;
  w.discr_weight = 0.0;
  if (arm != "correlation_only") w.lambda2 = 0.0;
  if (arm != "distance_only") w.lambda3 = 0.0;
  if (arm != "center_only") w.lambda4 = 0.0;
  return w;
}

}  // namespace detail

inline int run_synth(const SynthFlags& f) {
  auto [train, test] = gen_synthetic(f.spec);
  bool binary = f.format == "binary";
  bool zscore = f.normalize == "zscore";
  save_dataset(f.out, "train", train, binary, zscore);
  save_dataset(f.out, "test", test, binary, zscore);
  std::cerr << "wrote " << train.size() << " train and " << test.size() << " test pairs under "
            << f.out << "\n";
  return 0;
}

inline int run_train(const TrainFlags& f) {
  detail::TrainOutcome outcome = detail::train_run(f);
  std::cerr << "final total loss " << outcome.history.back().total << "; checkpoint at "
            << (std::filesystem::path(f.out) / "model.ckpt").string() << "\n";
  return 0;
}

inline int run_eval(const EvalFlags& f) {
  CheckpointContents ck = load_checkpoint(f.checkpoint);
  EvalReport r = detail::eval_to_dir(ck, f.test_manifest, std::filesystem::path(f.out) / "eval");
  std::cerr << "mAP audio2visual=" << r.audio2visual.map << " visual2audio=" << r.visual2audio.map
            << " average=" << r.average_map << "\n";
  return 0;
}

inline int run_ablate(const AblateFlags& f) {
  static const char* kArms[] = {"center_only", "correlation_only", "distance_only", "full"};
  std::vector<std::pair<std::string, EvalReport>> results;
  for (const char* arm : kArms) {
    TrainFlags tf = f.train;
    tf.out = (std::filesystem::path(f.train.out) / "arms" / arm).string();
    tf.run.weights = detail::arm_weights(arm);
    std::cerr << "training arm " << arm << "\n";
    detail::TrainOutcome outcome = detail::train_run(tf, true);
    CheckpointContents ck{std::move(outcome.params), detail::norm_extras(outcome.norm)};
    EvalReport r =
        detail::eval_to_dir(ck, f.test_manifest, std::filesystem::path(tf.out) / "eval");
    std::cerr << "arm " << arm << " average mAP " << r.average_map << "\n";
    results.emplace_back(arm, r);
  }
  auto out = avret::detail::open_out(std::filesystem::path(f.train.out) / "ablation.csv",
                                     std::ios::binary);
  out << "arm,audio2visual,visual2audio,average\n";
  for (const auto& [arm, r] : results)
    out << arm << ',' << avret::detail::fmt_double(r.audio2visual.map) << ','
        << avret::detail::fmt_double(r.visual2audio.map) << ','
        << avret::detail::fmt_double(r.average_map) << '\n';
  return 0;
}

inline int run_baseline_cca(const CcaFlags& f) {
  Manifest tm = read_manifest(f.train_manifest);
  Manifest em = read_manifest(f.test_manifest);
  if (em.d_visual != tm.d_visual || em.d_audio != tm.d_audio || em.classes != tm.classes)
    throw std::runtime_error("train and test manifests disagree on dimensions or classes");
  PairedDataset train = load_dataset(f.train_manifest);
  PairedDataset test = load_dataset(f.test_manifest);
  detail::NormStats norm = detail::fit_and_apply_norm(train, tm.zscore);
  detail::apply_norm(test, norm);

  std::size_t cap = std::min(tm.d_audio, tm.d_visual);
  if (f.k > cap)
    throw std::runtime_error("k=" + std::to_string(f.k) +
                             " exceeds min(d_audio, d_visual)=" + std::to_string(cap));
  std::size_t k = f.k == 0 ? std::min(cap, train.size() - 1) : f.k;
  std::optional<double> ridge;
  if (f.ridge >= 0.0) ridge = f.ridge;
  CcaModel model = cca_fit(to_tensor(train.audio), to_tensor(train.visual), k, ridge);

  std::filesystem::create_directories(f.out);
  {
    auto out =
        avret::detail::open_out(std::filesystem::path(f.out) / "correlations.csv", std::ios::binary);
    out << "component,correlation\n";
    for (std::size_t i = 0; i < model.correlations.size(); ++i)
      out << i << ',' << avret::detail::fmt_double(model.correlations[i]) << '\n';
  }

  Tensor emb_a = cca_transform(model, to_tensor(test.audio), Modality::audio);
  Tensor emb_v = cca_transform(model, to_tensor(test.visual), Modality::visual);
  EvalReport r = evaluate_retrieval(emb_a, emb_v, test.labels.ids, tm.classes);
  write_eval_report((std::filesystem::path(f.out) / "eval").string(), r);
  std::cerr << "cca baseline mAP audio2visual=" << r.audio2visual.map
            << " visual2audio=" << r.visual2audio.map << " average=" << r.average_map << "\n";
  return 0;
}

namespace detail {

inline void write_resolved(CLI::App* cmd, const std::string& dir) {
  std::filesystem::create_directories(dir);
  write_text_file(std::filesystem::path(dir) / "config.resolved", cmd->config_to_str(true, false));
}

inline void add_train_options(CLI::App* cmd, TrainFlags& f, bool with_weights) {
  cmd->add_option("--train-manifest", f.train_manifest, "train split manifest")->required();
  cmd->add_option("--out", f.out, "run output directory")->required();
  cmd->add_option("--hidden", f.hidden, "encoder hidden width")->check(CLI::PositiveNumber);
  cmd->add_option("--latent", f.latent, "latent width")->check(CLI::PositiveNumber);
  cmd->add_option("--activation", f.activation, "hidden-layer activation")
      ->check(CLI::IsMember({"tanh", "identity"}));
  cmd->add_option("--pretrain-epochs", f.run.pretrain_epochs, "reconstruction-only epochs")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--epochs", f.run.full_epochs, "full-objective epochs")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--batch-size", f.run.batch_size, "minibatch size")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", f.run.seed, "run seed");
  cmd->add_option("--center-alpha", f.run.center_alpha, "center update rate in [0,1]");
  cmd->add_option("--grad-clip", f.run.grad_clip, "global gradient-norm cap (0 disables)");
  cmd->add_option("--checkpoint-every", f.run.checkpoint_every,
                  "epochs between checkpoint snapshots (0 disables)")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--base-lr", f.run.schedule.base_lr, "warmup start learning rate");
  cmd->add_option("--peak-lr", f.run.schedule.peak_lr, "post-warmup learning rate");
  cmd->add_option("--warmup-epochs", f.run.schedule.warmup_epochs, "linear warmup length")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--decay1-epoch", f.run.schedule.decay1_epoch, "first decay boundary");
  cmd->add_option("--decay1-lr", f.run.schedule.decay1_lr, "rate after the first decay");
  cmd->add_option("--decay2-epoch", f.run.schedule.decay2_epoch, "second decay boundary");
  cmd->add_option("--decay2-lr", f.run.schedule.decay2_lr, "rate after the second decay");
  if (with_weights) {
    cmd->add_option("--lambda1", f.run.weights.lambda1, "VAE loss weight");
    cmd->add_option("--lambda2", f.run.weights.lambda2, "correlation loss weight");
    cmd->add_option("--lambda3", f.run.weights.lambda3, "distance loss weight");
    cmd->add_option("--lambda4", f.run.weights.lambda4, "center loss weight");
    cmd->add_option("--discr-weight", f.run.weights.discr_weight, "discriminative loss gate");
  }
}

}  // namespace detail

inline int run(int argc, const char* const* argv) {
  CLI::App app{"audio-visual cross-modal retrieval toolkit"};
  app.require_subcommand(1);

  // one config-path slot per subcommand; the file itself is merged into the
  // argument list before parsing (see merge_config_args)
  std::string config_slots[5];
  auto configure = [&config_slots](CLI::App* cmd, int slot) {
    cmd->option_defaults()->always_capture_default(true);
    cmd->add_option("--config", config_slots[slot], "key=value defaults; explicit flags win")
        ->configurable(false);
  };

  SynthFlags sf;
  CLI::App* synth_cmd = app.add_subcommand("synth", "generate a paired synthetic dataset");
  configure(synth_cmd, 0);
  synth_cmd->add_option("--out", sf.out, "output directory")->required();
  synth_cmd->add_option("--classes", sf.spec.classes, "category count")
      ->check(CLI::PositiveNumber);
  synth_cmd->add_option("--per-class", sf.spec.per_class, "pairs per category")
      ->check(CLI::PositiveNumber);
  synth_cmd->add_option("--prototype-dim", sf.spec.prototype_dim, "latent prototype width")
      ->check(CLI::PositiveNumber);
  synth_cmd->add_option("--noise", sf.spec.noise_scale, "observation noise scale");
  synth_cmd->add_option("--jitter", sf.spec.jitter_scale, "within-class prototype jitter");
  synth_cmd->add_option("--train-fraction", sf.spec.train_fraction, "train split share");
  synth_cmd->add_option("--d-visual", sf.spec.d_visual, "visual feature width")
      ->check(CLI::PositiveNumber);
  synth_cmd->add_option("--d-audio", sf.spec.d_audio, "audio feature width")
      ->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", sf.spec.seed, "generator seed");
  synth_cmd->add_option("--format", sf.format, "feature file format")
      ->check(CLI::IsMember({"binary", "csv"}));
  synth_cmd->add_option("--normalize", sf.normalize, "normalization stamped into manifests")
      ->check(CLI::IsMember({"none", "zscore"}));
  synth_cmd->callback([&] {
    detail::write_resolved(synth_cmd, sf.out);
    run_synth(sf);
  });

  TrainFlags tf;
  CLI::App* train_cmd = app.add_subcommand("train", "two-stage training run");
  configure(train_cmd, 1);
  detail::add_train_options(train_cmd, tf, true);
  train_cmd->callback([&] {
    detail::write_resolved(train_cmd, tf.out);
    run_train(tf);
  });

  EvalFlags ef;
  CLI::App* eval_cmd = app.add_subcommand("eval", "retrieval evaluation of a checkpoint");
  configure(eval_cmd, 2);
  eval_cmd->add_option("--checkpoint", ef.checkpoint, "trained model checkpoint")->required();
  eval_cmd->add_option("--test-manifest", ef.test_manifest, "test split manifest")->required();
  eval_cmd->add_option("--out", ef.out, "run output directory (reports land in eval/)")
      ->required();
  eval_cmd->callback([&] {
    detail::write_resolved(eval_cmd, (std::filesystem::path(ef.out) / "eval").string());
    run_eval(ef);
  });

  AblateFlags af;
  CLI::App* ablate_cmd = app.add_subcommand("ablate", "train and compare loss-term arms");
  configure(ablate_cmd, 3);
  detail::add_train_options(ablate_cmd, af.train, false);
  ablate_cmd->add_option("--test-manifest", af.test_manifest, "test split manifest")->required();
  ablate_cmd->callback([&] {
    detail::write_resolved(ablate_cmd, af.train.out);
    run_ablate(af);
  });

  CcaFlags cf;
  CLI::App* cca_cmd = app.add_subcommand("baseline-cca", "linear CCA retrieval baseline");
  configure(cca_cmd, 4);
  cca_cmd->add_option("--train-manifest", cf.train_manifest, "train split manifest")->required();
  cca_cmd->add_option("--test-manifest", cf.test_manifest, "test split manifest")->required();
  cca_cmd->add_option("--out", cf.out, "run output directory")->required();
  cca_cmd->add_option("--k", cf.k, "projection components (0 = automatic)");
  cca_cmd->add_option("--ridge", cf.ridge, "covariance ridge (negative = automatic)");
  cca_cmd->callback([&] {
    detail::write_resolved(cca_cmd, cf.out);
    run_baseline_cca(cf);
  });

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = detail::merge_config_args(std::move(args));
    std::reverse(args.begin(), args.end());  // parse(vector) expects reversed order
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace avret::cli
