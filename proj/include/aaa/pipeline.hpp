#pragma once

// File-level stages: corpus on disk, inference, measurement, evaluation,
// cross-validation and overlays. Each stage reads and writes only the files
// named in its signature, so chaining them through a directory gives the
// same result as running them in process.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "aaa/detect.hpp"
#include "aaa/geometry.hpp"
#include "aaa/io.hpp"
#include "aaa/phantom.hpp"
#include "aaa/training.hpp"
#include "aaa/unet.hpp"

namespace aaa {

// Half-open slice range [lo, hi). Predictions outside it are cleared.
struct ZCrop {
  std::size_t lo = 0, hi = 0;
  bool operator==(const ZCrop&) const = default;
};

// Parses "LO:HI"; throws std::invalid_argument on malformed input.
ZCrop parse_z_crop(const std::string& text);

// Study ids per role.
struct FoldSplit {
  std::vector<std::string> train, validation, test;
  bool operator==(const FoldSplit&) const = default;
};

struct RunConfig {
  UNetConfig network;
  RmspropOptions optimizer;
  std::uint64_t seed = 0;
  int epochs = 100;
  int folds = 5;            // k
  int fold_rotation = 0;    // n in fold_roles(n, k)
  std::uint64_t fold_seed = 0;
  // Explicit study lists; when set, `train` uses them instead of folds.
  std::optional<FoldSplit> split;
  std::optional<ZCrop> z_crop;
  double threshold = 0.5;
  std::string corpus_dir;   // relative paths resolve against the config file
  int threads = 1;

  bool operator==(const RunConfig&) const;
};

Json to_json(const RunConfig& c);
RunConfig run_config_from_json(const Json& j);
RunConfig read_run_config(const fs::path& path);

// ---------------------------------------------------------------------------
// Corpus on disk: <dir>/manifest.json, <dir>/volumes/<id>.json|raw,
// <dir>/masks/<id>.json|raw.

struct CorpusEntry {
  std::string study_id;
  std::string patient_id;
  CtType ct_type = CtType::kContrast;
  std::string volume;  // relative to the corpus directory
  std::string mask;
  Dims dims;
  Spacing spacing;
  double analytic_max_diameter_mm = 0.0;
  std::optional<double> reference_diameter_mm;  // measured on the truth mask
  bool reference_aaa = false;
  double tilt_deg = 0.0;
  bool operator==(const CorpusEntry&) const = default;
};

struct CorpusManifest {
  std::vector<CorpusEntry> studies;
  Json generator;  // parameters that produced the corpus
  const CorpusEntry& find(const std::string& study_id) const;
  std::vector<StudyRef> refs() const;
};

CorpusEntry describe_study(const PhantomStudy& study);

// Writes every study and the manifest; returns the manifest.
CorpusManifest write_corpus(const fs::path& dir,
                            const std::vector<PhantomStudy>& studies,
                            const Json& generator = Json::object());
CorpusManifest read_manifest(const fs::path& dir);

// ---------------------------------------------------------------------------
// Stages

// Pads to the network grid, runs inference, thresholds, removes the padding
// and applies the z-crop. The mask inherits the volume's spacing.
MaskVolume predict_mask(const WeightStore<float>& weights,
                        const UNetConfig& config, const StudyVolume& volume,
                        const std::optional<ZCrop>& z_crop = std::nullopt,
                        double threshold = 0.5);

struct MeasuredStudy {
  StudyReport report;
  std::vector<SliceMeasurement> slices;
};

// Measurement of a predicted mask; only the prediction-side report fields
// are filled.
MeasuredStudy measure_mask(const std::string& study_id, const MaskVolume& mask);

Json to_json(const MeasuredStudy& m);
MeasuredStudy measured_study_from_json(const Json& j);

// Adds reference-side fields from the manifest and the Dice against the
// truth mask, then finalizes.
void attach_reference(StudyReport& report, const CorpusEntry& entry,
                      const MaskVolume& pred, const MaskVolume& truth);

FoldSplit split_for_rotation(const FoldPlan& plan, int rotation);

struct TrainOutcome {
  TrainResult result;
  FoldSplit split;
};

// Trains on split.train with model selection on split.validation. The
// initialization and shuffling seed is mix_seed(config.seed, rotation).
TrainOutcome train_split(const fs::path& corpus_dir,
                         const CorpusManifest& manifest, const FoldSplit& split,
                         const RunConfig& config, int rotation,
                         std::function<void(const EpochRecord&)> on_epoch = {});

TrainOutcome train_rotation(const fs::path& corpus_dir,
                            const CorpusManifest& manifest,
                            const FoldPlan& plan, const RunConfig& config,
                            int rotation,
                            std::function<void(const EpochRecord&)> on_epoch = {});

// Full in-process inference, measurement and scoring of the named studies.
std::vector<MeasuredStudy> evaluate_studies(
    const WeightStore<float>& weights, const RunConfig& config,
    const fs::path& corpus_dir, const CorpusManifest& manifest,
    const std::vector<std::string>& study_ids, int fold = -1);

// Summary tables written by `eval` and `crossval`.
struct EvalTables {
  std::string by_ct;
  std::string by_fold;
  std::string overall;
  std::string stratified;
  std::string per_study;
};

EvalTables eval_tables(const std::vector<StudyReport>& reports);
void write_eval_tables(const fs::path& dir, const EvalTables& tables);
std::string per_study_csv(const std::vector<StudyReport>& reports);
std::string fold_roles_csv(int k);

// ---------------------------------------------------------------------------
// Overlays

struct OverlayOptions {
  double window_lo = -200.0;
  double window_hi = 500.0;
  double mask_alpha = 0.4;
};

// Binary PPM (P6) of slice z: windowed grayscale, red-tinted mask, green
// fitted-ellipse outline and yellow crosses at the long-axis endpoints
// when the slice has a measurement. Throws std::out_of_range for a bad z.
std::string render_overlay(const StudyVolume& volume, const MaskVolume& mask,
                           const std::vector<SliceMeasurement>& slices,
                           std::size_t z, const OverlayOptions& options = {});

}  // namespace aaa
