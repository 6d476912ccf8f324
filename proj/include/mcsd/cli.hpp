#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mcsd/checkpoint.hpp"
#include "mcsd/config.hpp"
#include "mcsd/data.hpp"
#include "mcsd/metrics.hpp"
#include "mcsd/model.hpp"
#include "mcsd/overlay.hpp"
#include "mcsd/synth.hpp"
#include "mcsd/train.hpp"
#include "mcsd/verify.hpp"

namespace mcsd {
namespace cli {

namespace fs = std::filesystem;

inline std::string out_root() {
  const char* env = std::getenv("MCSD_OUT_ROOT");
  return env != nullptr && *env != '\0' ? env : "out";
}

inline std::string resolve_out(const std::string& flag, const std::string& command) {
  if (!flag.empty()) return flag;
  return (fs::path(out_root()) / command).string();
}

struct SplitSamples {
  std::string what;
};

// Loads the manifest named by the config, splits it by month, and expands
// one side into windowed samples.
template <typename T>
std::vector<SequenceSample<T>> load_split(const RunConfig& rc, const DatasetManifest& manifest,
                                          const std::vector<int64_t>& side, int64_t seq_len,
                                          const std::string& what) {
  DatasetManifest part = subset_manifest(manifest, side);
  std::vector<std::vector<int64_t>> windows = build_sequences(part, seq_len, rc.interval_minutes);
  if (windows.empty())
    throw DataError("no " + what + " sequences: " + std::to_string(part.records.size()) +
                    " frames yield no window of " + std::to_string(seq_len) + " frames at " +
                    std::to_string(rc.interval_minutes) + " min spacing");
  std::vector<SequenceSample<T>> samples;
  samples.reserve(windows.size());
  for (const auto& w : windows) samples.push_back(load_sample<T>(part, w));
  return samples;
}

inline DatasetManifest open_manifest(const RunConfig& rc) {
  if (rc.manifest.empty()) throw ConfigError("config key 'manifest' is required for this command");
  return load_manifest(rc.manifest, rc.cadence_minutes);
}

// Copies frame t of a [T,1,H,W] or [1,T,1,H,W] stack into a [H,W] tensor.
template <typename T>
Tensor<T> frame_slice(const Tensor<T>& stack, int64_t t, int64_t h, int64_t w) {
  const T* src = stack.data() + t * h * w;
  std::vector<T> values(src, src + h * w);
  return Tensor<T>::from({h, w}, std::move(values));
}

template <typename T>
int run_train(const RunConfig& rc, const std::string& out_dir) {
  DatasetManifest manifest = open_manifest(rc);
  auto [train_idx, test_idx] = split_monthly(manifest, rc.groups, rc.test_group);
  auto train_samples = load_split<T>(rc, manifest, train_idx, rc.seq_len, "training");
  auto val_samples = load_split<T>(rc, manifest, test_idx, rc.seq_len, "validation");

  fs::create_directories(out_dir);
  {
    std::ofstream echo(fs::path(out_dir) / "config.json");
    echo << run_config_to_json(rc).dump(2) << '\n';
  }

  McsdNet<T> model(rc.model_config(), rc.seed);
  Trainer<T> trainer(model, rc.focal_config(), rc.adam_config(), rc.plateau_config(), rc.seed);

  FitOptions opts;
  opts.epochs = rc.epochs;
  opts.batch_size = rc.batch_size;
  opts.best_path = (fs::path(out_dir) / "best.ckpt").string();
  opts.last_path = (fs::path(out_dir) / "last.ckpt").string();
  std::ofstream log(fs::path(out_dir) / "log.csv");
  opts.log = &log;

  std::cout << "training on " << train_samples.size() << " sequences, validating on "
            << val_samples.size() << '\n';
  std::vector<EpochLog> logs = trainer.fit(train_samples, val_samples, opts);
  const EpochLog& last = logs.back();
  std::cout << "epoch " << last.epoch << ": train_loss " << format_full(last.train_loss)
            << ", val_loss " << format_full(last.val_loss) << ", lr " << format_full(last.lr)
            << '\n';
  std::cout << "checkpoints written to " << out_dir << '\n';
  return 0;
}

template <typename T>
int run_eval(const RunConfig& rc, const std::string& ckpt_path, const std::string& bins_path) {
  Checkpoint<T> ckpt = load_checkpoint<T>(ckpt_path);
  McsdNet<T> model(ckpt.model, rc.seed);
  restore_model(ckpt, model);

  DatasetManifest manifest = open_manifest(rc);
  auto [train_idx, test_idx] = split_monthly(manifest, rc.groups, rc.test_group);
  (void)train_idx;
  auto samples = load_split<T>(rc, manifest, test_idx, ckpt.model.seq_len, "test");

  std::vector<Tensor<T>> preds, gts;
  preds.reserve(samples.size());
  gts.reserve(samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    auto [images, masks] = stack_batch(samples, {static_cast<int64_t>(i)}, 0, 1);
    Tensor<T> probs = model.forward(images);
    preds.push_back(predict_mask(probs, ckpt.model.threshold));
    gts.push_back(masks);
  }
  MetricsReport report = binned_evaluate(preds, gts);
  std::cout << format_metrics_table(report) << '\n' << format_metrics_kv(report);
  if (!bins_path.empty()) {
    fs::path p(bins_path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p);
    out << format_bins_csv(report);
    std::cout << "bin counts written to " << bins_path << '\n';
  }
  return 0;
}

template <typename T>
int run_predict(const RunConfig& rc, const std::string& ckpt_path, const std::string& out_dir,
                bool overlay) {
  Checkpoint<T> ckpt = load_checkpoint<T>(ckpt_path);
  McsdNet<T> model(ckpt.model, rc.seed);
  restore_model(ckpt, model);

  DatasetManifest manifest = open_manifest(rc);
  auto [train_idx, test_idx] = split_monthly(manifest, rc.groups, rc.test_group);
  (void)train_idx;
  auto samples = load_split<T>(rc, manifest, test_idx, ckpt.model.seq_len, "test");

  fs::create_directories(out_dir);
  const int64_t h = ckpt.model.input_height;
  const int64_t w = ckpt.model.input_width;
  int64_t written = 0;
  for (size_t i = 0; i < samples.size(); ++i) {
    auto [images, masks] = stack_batch(samples, {static_cast<int64_t>(i)}, 0, 1);
    Tensor<T> probs = model.forward(images);
    Tensor<T> pred = predict_mask(probs, ckpt.model.threshold);
    for (int64_t t = 0; t < ckpt.model.seq_len; ++t) {
      std::ostringstream stem;
      stem << "seq" << std::setw(3) << std::setfill('0') << i << "_f" << std::setw(2)
           << std::setfill('0') << t;
      Tensor<T> pf = frame_slice(pred, t, h, w);
      write_png_gray((fs::path(out_dir) / (stem.str() + "_mask.png")).string(), mask_to_image(pf));
      ++written;
      if (overlay) {
        Tensor<T> imf = frame_slice(samples[i].images, t, h, w);
        Tensor<T> gtf = frame_slice(samples[i].masks, t, h, w);
        write_png_rgb((fs::path(out_dir) / (stem.str() + "_overlay.png")).string(),
                      overlay_frame(imf, pf, gtf));
        ++written;
      }
    }
  }
  std::cout << "wrote " << written << " images for " << samples.size() << " sequences to "
            << out_dir << '\n';
  return 0;
}

inline int run_synth(const RunConfig& rc, const std::string& out_dir) {
  DatasetManifest manifest = synth_generate(rc.synthetic_config(), out_dir);
  std::cout << "generated " << manifest.records.size() << " frames at cadence "
            << manifest.cadence_minutes << " min in " << out_dir << '\n';
  std::cout << "manifest: " << (fs::path(out_dir) / "manifest.csv").string() << '\n';
  return 0;
}

inline int run_verify(const std::string& suite, const VerifyHooks& hooks) {
  std::vector<VerifyResult> results = run_verification(suite, hooks);
  for (const VerifyResult& r : results) std::cout << format_verify_line(r) << '\n';
  const size_t passed =
      static_cast<size_t>(std::count_if(results.begin(), results.end(),
                                        [](const VerifyResult& r) { return r.pass; }));
  std::cout << passed << "/" << results.size() << " checks passed\n";
  return all_passed(results) ? 0 : 3;
}

inline int dispatch(int argc, char** argv) {
  CLI::App app{"spatiotemporal cloud segmentation"};
  app.require_subcommand(1);

  std::string config_path, out_flag, ckpt_path, bins_path, suite = "all";
  bool overlay = false;
  double focal_grad_scale = 1.0;
  int64_t seed = -1;

  auto add_common = [&](CLI::App* cmd, bool needs_config) {
    auto* opt = cmd->add_option("--config", config_path, "run configuration JSON");
    if (needs_config) opt->required();
    cmd->add_option("--seed", seed, "override the config seed");
    cmd->add_option("--out", out_flag, "output directory");
  };

  CLI::App* train = app.add_subcommand("train", "fit a model on a manifest");
  add_common(train, true);

  CLI::App* eval = app.add_subcommand("eval", "score a checkpoint on the test split");
  add_common(eval, true);
  eval->add_option("--checkpoint", ckpt_path, "model checkpoint")->required();
  eval->add_option("--bins", bins_path, "write per-bin counts CSV here");

  CLI::App* predict = app.add_subcommand("predict", "write predicted masks as PNGs");
  add_common(predict, true);
  predict->add_option("--checkpoint", ckpt_path, "model checkpoint")->required();
  predict->add_flag("--overlay", overlay, "also write RGB confusion overlays");

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth, false);

  CLI::App* verify = app.add_subcommand("verify", "run self-checks");
  verify->add_option("--suite", suite, "grad|norm|metrics|shape|all");
  verify->add_option("--focal-grad-scale", focal_grad_scale, "")->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (verify->parsed()) {
    VerifyHooks hooks;
    hooks.focal_grad_scale = focal_grad_scale;
    return run_verify(suite, hooks);
  }

  RunConfig rc;
  if (!config_path.empty()) rc = load_run_config(config_path);
  if (seed >= 0) rc.seed = static_cast<uint64_t>(seed);
  rc.validate();

  if (synth->parsed()) return run_synth(rc, resolve_out(out_flag, "synth"));

  const bool f32 = rc.dtype == "f32";
  if (train->parsed()) {
    const std::string out = resolve_out(out_flag, "train");
    return f32 ? run_train<float>(rc, out) : run_train<double>(rc, out);
  }
  if (eval->parsed()) {
    return f32 ? run_eval<float>(rc, ckpt_path, bins_path)
               : run_eval<double>(rc, ckpt_path, bins_path);
  }
  if (predict->parsed()) {
    const std::string out = resolve_out(out_flag, "predict");
    return f32 ? run_predict<float>(rc, ckpt_path, out, overlay)
               : run_predict<double>(rc, ckpt_path, out, overlay);
  }
  return 1;
}

inline int run(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const ShapeError& e) {
    std::cerr << "internal shape error: " << e.what() << '\n';
    return 3;
  }
}

}  // namespace cli
}  // namespace mcsd
