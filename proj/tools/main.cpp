// Command-line front end. Exit codes: 0 ok, 1 usage, 2 data error,
// 3 numeric failure.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "aaa/error.hpp"
#include "aaa/parallel.hpp"
#include "aaa/pipeline.hpp"

using namespace aaa;

namespace {


constexpr int kUsage = 1;
constexpr int kData = 2;
constexpr int kNumeric = 3;

void log(const std::string& msg) { std::cerr << msg << '\n'; }

// Optional overrides shared by the config-driven subcommands.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<int> epochs;
  std::optional<std::string> z_crop;
};

void add_overrides(CLI::App* app, Overrides& o, bool with_epochs) {
  app->add_option("--seed", o.seed, "Override the configured seed");
  app->add_option("--threads", o.threads, "Worker threads")
      ->check(CLI::PositiveNumber);
  app->add_option("--z-crop", o.z_crop, "Keep predictions in slices LO:HI");
  if (with_epochs)
    app->add_option("--epochs", o.epochs, "Override the configured epochs")
        ->check(CLI::NonNegativeNumber);
}

RunConfig load_config(const std::string& path, const Overrides& o) {
  RunConfig c = read_run_config(path);
  if (o.seed) c.seed = *o.seed;
  if (o.threads) c.threads = *o.threads;
  if (o.epochs) c.epochs = *o.epochs;
  if (o.z_crop) c.z_crop = parse_z_crop(*o.z_crop);
  if (c.corpus_dir.empty()) throw DataError(path + ": corpus_dir is not set");
  return c;
}

Json split_json(const FoldSplit& s) {
  return {{"train", s.train}, {"validation", s.validation}, {"test", s.test}};
}

std::vector<std::string> ids_from_split(const fs::path& path) {
  try {
    return read_json(path).at("test").get<std::vector<std::string>>();
  } catch (const Json::exception& e) {
    throw DataError(path.string() + ": malformed split: " + e.what());
  }
}

// Files named <id><suffix> in dir, sorted by id.
std::vector<std::string> ids_with_suffix(const fs::path& dir,
                                         const std::string& suffix) {
  if (!fs::is_directory(dir))
    throw DataError(dir.string() + ": not a directory");
  std::vector<std::string> ids;
  for (const auto& f : fs::directory_iterator(dir)) {
    const std::string name = f.path().filename().string();
    if (name.size() > suffix.size() &&
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
      ids.push_back(name.substr(0, name.size() - suffix.size()));
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

void write_measured(const fs::path& path, const MeasuredStudy& m) {
  write_json(path, to_json(m));
}

MeasuredStudy read_measured(const fs::path& path) {
  try {
    return measured_study_from_json(read_json(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_train_outputs(const fs::path& out, const RunConfig& config,
                         const TrainOutcome& t) {
  write_weights(out / "weights.json", t.result.best, config.network);
  write_text(out / "history.csv", history_csv(t.result.history));
  write_json(out / "split.json", split_json(t.split));
  Json cfg = to_json(config);
  cfg["best_epoch"] = t.result.best_epoch;
  write_json(out / "run_config.json", cfg);
}


}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Aorta segmentation, diameter measurement and AAA detection"};
  app.require_subcommand(1);

  // phantom
  auto* phantom = app.add_subcommand("phantom", "Generate a synthetic corpus");
  std::size_t n_studies = 0;
  std::uint64_t seed = 0;
  std::string out;
  int threads = 1;
  CorpusOptions copts;
  phantom->add_option("--n", n_studies, "Number of studies")->required()
      ->check(CLI::PositiveNumber);
  phantom->add_option("--seed", seed, "Corpus seed");
  phantom->add_option("--out", out, "Output directory")->required();
  phantom->add_option("--threads", threads, "Worker threads")
      ->check(CLI::PositiveNumber);
  phantom->add_option("--positive-fraction", copts.positive_fraction)
      ->check(CLI::Range(0.0, 1.0));
  phantom->add_option("--contrast-fraction", copts.contrast_fraction)
      ->check(CLI::Range(0.0, 1.0));
  phantom->add_option("--paired-fraction", copts.paired_fraction)
      ->check(CLI::Range(0.0, 1.0));

  // train
  auto* train_cmd = app.add_subcommand("train", "Train one fold rotation");
  std::string config_path;
  Overrides ov;
  train_cmd->add_option("--config", config_path, "Run config JSON")->required();
  train_cmd->add_option("--out", out, "Output directory")->required();
  add_overrides(train_cmd, ov, true);

  // infer
  auto* infer_cmd = app.add_subcommand("infer", "Segment volumes");
  std::string weights_path, volume_path, corpus_dir, split_path;
  double threshold = 0.5;
  infer_cmd->add_option("--weights", weights_path, "Weight manifest")->required();
  auto* vol_opt = infer_cmd->add_option("--volume", volume_path,
                                        "Single volume header; --out is a file");
  auto* corpus_opt = infer_cmd->add_option(
      "--corpus", corpus_dir, "Corpus directory; --out is a directory");
  infer_cmd->add_option("--split", split_path,
                        "split.json from train; restricts --corpus to its test studies");
  infer_cmd->add_option("--out", out, "Output path")->required();
  infer_cmd->add_option("--threshold", threshold)->check(CLI::Range(0.0, 1.0));
  add_overrides(infer_cmd, ov, false);
  vol_opt->excludes(corpus_opt);

  // measure
  auto* measure_cmd = app.add_subcommand("measure", "Measure masks");
  std::string mask_path, study_id, dir;
  auto* mask_opt = measure_cmd->add_option("--mask", mask_path,
                                           "Single mask header; --out is a file");
  auto* dir_opt = measure_cmd->add_option(
      "--dir", dir, "Measure every <id>.mask.json in a directory");
  measure_cmd->add_option("--study-id", study_id, "Study id for --mask");
  measure_cmd->add_option("--out", out, "Output report (with --mask)");
  mask_opt->excludes(dir_opt);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Score reports against the corpus");
  std::string pred_dir;
  eval_cmd->add_option("--corpus", corpus_dir, "Corpus directory")->required();
  eval_cmd->add_option("--pred", pred_dir,
                       "Directory of <id>.mask.json and <id>.report.json")
      ->required();
  eval_cmd->add_option("--out", out, "Output directory")->required();
  int fold_tag = -1;
  eval_cmd->add_option("--fold", fold_tag, "Fold index recorded in every report");

  // crossval
  auto* cv_cmd = app.add_subcommand("crossval", "Run every fold rotation");
  cv_cmd->add_option("--config", config_path, "Run config JSON")->required();
  cv_cmd->add_option("--out", out, "Output directory")->required();
  add_overrides(cv_cmd, ov, true);

  // overlay
  auto* ov_cmd = app.add_subcommand("overlay", "Render annotated slices");
  std::string report_path, slices = "";
  OverlayOptions oopts;
  ov_cmd->add_option("--volume", volume_path, "Volume header")->required();
  ov_cmd->add_option("--mask", mask_path, "Mask header")->required();
  ov_cmd->add_option("--report", report_path, "Report JSON with slice ellipses");
  ov_cmd->add_option("--slices", slices, "Slice range LO:HI (default: all)");
  ov_cmd->add_option("--window-lo", oopts.window_lo);
  ov_cmd->add_option("--window-hi", oopts.window_hi);
  ov_cmd->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsage;
  }

  try {
    if (phantom->parsed()) {
      const auto studies = corpus(n_studies, copts, seed, threads);
      Json gen = {{"n", n_studies},
                  {"seed", seed},
                  {"positive_fraction", copts.positive_fraction},
                  {"contrast_fraction", copts.contrast_fraction},
                  {"paired_fraction", copts.paired_fraction}};
      const auto m = write_corpus(out, studies, gen);
      log("wrote " + std::to_string(m.studies.size()) + " studies to " + out);
    } else if (train_cmd->parsed()) {
      const RunConfig config = load_config(config_path, ov);
      const auto manifest = read_manifest(config.corpus_dir);
      const FoldSplit split =
          config.split ? *config.split
                       : split_for_rotation(make_folds(manifest.refs(), config.folds,
                                                       config.fold_seed),
                                            config.fold_rotation);
      auto progress = [](const EpochRecord& r) {
        log("epoch " + std::to_string(r.epoch) + " train " +
            std::to_string(r.train_loss) + " val " + std::to_string(r.val_loss));
      };
      const TrainOutcome t = train_split(config.corpus_dir, manifest, split,
                                         config, config.fold_rotation, progress);
      write_train_outputs(out, config, t);
      log("best epoch " + std::to_string(t.result.best_epoch));
    } else if (infer_cmd->parsed()) {
      if (volume_path.empty() && corpus_dir.empty())
        throw CLI::RequiredError("--volume or --corpus");
      const LoadedWeights w = read_weights(weights_path);
      std::optional<ZCrop> crop;
      if (ov.z_crop) crop = parse_z_crop(*ov.z_crop);
      if (!volume_path.empty()) {
        const StudyVolume v = read_volume(volume_path);
        write_mask(out, predict_mask(w.weights, w.config, v, crop, threshold));
      } else if (!corpus_dir.empty()) {
        const auto manifest = read_manifest(corpus_dir);
        std::vector<std::string> ids;
        if (!split_path.empty()) {
          ids = ids_from_split(split_path);
        } else {
          for (const auto& e : manifest.studies) ids.push_back(e.study_id);
        }
        parallel_for(ids.size(), ov.threads.value_or(1), [&](std::size_t i) {
          const CorpusEntry& e = manifest.find(ids[i]);
          const StudyVolume v = read_volume(fs::path(corpus_dir) / e.volume);
          write_mask(fs::path(out) / (e.study_id + ".mask.json"),
                     predict_mask(w.weights, w.config, v, crop, threshold));
        });
        log("segmented " + std::to_string(ids.size()) + " studies");
      } else {
        throw CLI::RequiredError("--volume or --corpus");
      }
    } else if (measure_cmd->parsed()) {
      if (!mask_path.empty()) {
        if (out.empty()) throw CLI::RequiredError("--out");
        const MaskVolume m = read_mask(mask_path);
        const std::string id =
            study_id.empty() ? fs::path(mask_path).stem().stem().string() : study_id;
        write_measured(out, measure_mask(id, m));
      } else if (!dir.empty()) {
        for (const auto& id : ids_with_suffix(dir, ".mask.json"))
          write_measured(fs::path(dir) / (id + ".report.json"),
                         measure_mask(id, read_mask(fs::path(dir) / (id + ".mask.json"))));
      } else {
        throw CLI::RequiredError("--mask or --dir");
      }
    } else if (eval_cmd->parsed()) {
      const auto manifest = read_manifest(corpus_dir);
      std::vector<StudyReport> reports;
      Json all = Json::array();
      for (const auto& id : ids_with_suffix(pred_dir, ".report.json")) {
        MeasuredStudy m = read_measured(fs::path(pred_dir) / (id + ".report.json"));
        const CorpusEntry& e = manifest.find(m.report.study_id);
        m.report.fold = fold_tag;
        attach_reference(m.report, e,
                         read_mask(fs::path(pred_dir) / (id + ".mask.json")),
                         read_mask(fs::path(corpus_dir) / e.mask));
        all.push_back(to_json(m));
        reports.push_back(m.report);
      }
      if (reports.empty()) throw DataError(pred_dir + ": no reports found");
      write_eval_tables(out, eval_tables(reports));
      write_json(fs::path(out) / "reports.json", all);
      std::cout << eval_tables(reports).by_ct;
    } else if (cv_cmd->parsed()) {
      const RunConfig config = load_config(config_path, ov);
      const auto manifest = read_manifest(config.corpus_dir);
      const auto plan = make_folds(manifest.refs(), config.folds, config.fold_seed);
      write_text(fs::path(out) / "fold_roles.csv", fold_roles_csv(config.folds));
      // Folds run in parallel; each rotation trains on one thread.
      RunConfig inner = config;
      inner.threads = 1;
      std::vector<std::vector<MeasuredStudy>> results(config.folds);
      parallel_for(config.folds, config.threads, [&](std::size_t n) {
        const int rot = static_cast<int>(n);
        const TrainOutcome t =
            train_rotation(config.corpus_dir, manifest, plan, inner, rot);
        RunConfig fold_cfg = inner;
        fold_cfg.fold_rotation = rot;
        write_train_outputs(fs::path(out) / ("rotation" + std::to_string(rot)),
                            fold_cfg, t);
        // Each study is tagged with the fold it belongs to.
        std::vector<MeasuredStudy> r = evaluate_studies(
            t.result.best, inner, config.corpus_dir, manifest, t.split.test);
        for (auto& m : r) m.report.fold = plan.fold_of(m.report.study_id);
        results[n] = std::move(r);
      });
      std::vector<StudyReport> reports;
      Json all = Json::array();
      for (const auto& fold : results)
        for (const auto& m : fold) {
          reports.push_back(m.report);
          all.push_back(to_json(m));
        }
      write_eval_tables(out, eval_tables(reports));
      write_json(fs::path(out) / "reports.json", all);
      write_json(fs::path(out) / "run_config.json", to_json(config));
      std::cout << eval_tables(reports).by_fold;
    } else if (ov_cmd->parsed()) {
      const StudyVolume v = read_volume(volume_path);
      const MaskVolume m = read_mask(mask_path);
      std::vector<SliceMeasurement> meas;
      if (!report_path.empty()) meas = read_measured(report_path).slices;
      ZCrop range{0, v.dims.z};
      if (!slices.empty()) range = parse_z_crop(slices);
      for (std::size_t z = range.lo; z < range.hi; ++z) {
        char name[32];
        std::snprintf(name, sizeof name, "slice_%04zu.ppm", z);
        write_text(fs::path(out) / name, render_overlay(v, m, meas, z, oopts));
      }
    }
  } catch (const CLI::Error& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::out_of_range& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const Json::exception& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  }
  return 0;
}
