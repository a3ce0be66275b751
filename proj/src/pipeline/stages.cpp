#include <algorithm>
#include <cstdio>
#include <sstream>

#include "aaa/error.hpp"
#include "aaa/parallel.hpp"
#include "aaa/pipeline.hpp"
#include "aaa/random.hpp"

namespace aaa {

MaskVolume predict_mask(const WeightStore<float>& weights,
                        const UNetConfig& config, const StudyVolume& volume,
                        const std::optional<ZCrop>& z_crop, double threshold) {
  if (z_crop && z_crop->hi > volume.dims.z)
    throw DataError("z-crop " + std::to_string(z_crop->lo) + ":" +
                    std::to_string(z_crop->hi) + " exceeds " +
                    std::to_string(volume.dims.z) + " slices");
  const Padded<float> padded = pad_to_grid(volume, config.levels);
  const Tensor<float> prob =
      infer(weights, config, normalize_intensities(padded.grid, config));
  MaskVolume mask =
      unpad(binarize(prob, threshold, volume.spacing), padded.crop);
  if (z_crop) {
    const std::size_t n = mask.dims.slice_count();
    for (std::size_t z = 0; z < mask.dims.z; ++z)
      if (z < z_crop->lo || z >= z_crop->hi)
        std::fill_n(mask.slice(z), n, std::uint8_t{0});
  }
  return mask;
}

MeasuredStudy measure_mask(const std::string& study_id, const MaskVolume& mask) {
  StudyMeasurement m = measure_study(mask);
  MeasuredStudy out;
  out.report.study_id = study_id;
  out.report.max_diameter_mm = m.max_diameter_mm;
  finalize_report(out.report);
  out.slices = std::move(m.slices);
  return out;
}

namespace {

Json opt(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::optional<double> opt_double(const Json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

}  // namespace

Json to_json(const MeasuredStudy& m) {
  const StudyReport& r = m.report;
  Json j;
  j["format_version"] = kFormatVersion;
  j["study_id"] = r.study_id;
  j["max_diameter_mm"] = opt(r.max_diameter_mm);
  j["reference_diameter_mm"] = opt(r.reference_diameter_mm);
  j["predicted_aaa"] = r.predicted_aaa;
  j["no_aorta_found"] = r.no_aorta_found;
  j["reference_aaa"] = r.reference_aaa ? Json(*r.reference_aaa) : Json(nullptr);
  j["dice"] = opt(r.dice);
  j["delta_mm"] = opt(r.delta_mm);
  j["ct_type"] = to_string(r.ct_type);
  j["fold"] = r.fold;
  Json slices = Json::array();
  for (const auto& s : m.slices)
    slices.push_back({{"z", s.z},
                      {"raw_diameter_mm", s.raw_diameter_mm},
                      {"tilt_theta", s.tilt_theta},
                      {"corrected_diameter_mm", s.corrected_diameter_mm},
                      {"contour_points", s.contour_points},
                      {"ellipse",
                       {{"cx", s.ellipse.cx},
                        {"cy", s.ellipse.cy},
                        {"a", s.ellipse.a},
                        {"b", s.ellipse.b},
                        {"phi", s.ellipse.phi}}}});
  j["slices"] = std::move(slices);
  return j;
}

MeasuredStudy measured_study_from_json(const Json& j) {
  MeasuredStudy m;
  StudyReport& r = m.report;
  try {
    if (j.at("format_version").get<int>() != kFormatVersion)
      throw DataError("unsupported report format_version");
    r.study_id = j.at("study_id").get<std::string>();
    r.max_diameter_mm = opt_double(j, "max_diameter_mm");
    r.reference_diameter_mm = opt_double(j, "reference_diameter_mm");
    r.predicted_aaa = j.at("predicted_aaa").get<bool>();
    r.no_aorta_found = j.at("no_aorta_found").get<bool>();
    if (j.contains("reference_aaa") && !j["reference_aaa"].is_null())
      r.reference_aaa = j["reference_aaa"].get<bool>();
    r.dice = opt_double(j, "dice");
    r.delta_mm = opt_double(j, "delta_mm");
    r.ct_type = ct_type_from_string(j.at("ct_type").get<std::string>());
    r.fold = j.at("fold").get<int>();
    for (const auto& s : j.at("slices")) {
      SliceMeasurement sm;
      sm.z = s.at("z").get<std::size_t>();
      sm.raw_diameter_mm = s.at("raw_diameter_mm").get<double>();
      sm.tilt_theta = s.at("tilt_theta").get<double>();
      sm.corrected_diameter_mm = s.at("corrected_diameter_mm").get<double>();
      sm.contour_points = s.at("contour_points").get<std::size_t>();
      const Json& e = s.at("ellipse");
      sm.ellipse = {e.at("cx").get<double>(), e.at("cy").get<double>(),
                    e.at("a").get<double>(), e.at("b").get<double>(),
                    e.at("phi").get<double>()};
      sm.centroid = {sm.ellipse.cx, sm.ellipse.cy};
      m.slices.push_back(sm);
    }
  } catch (const Json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
  return m;
}

void attach_reference(StudyReport& report, const CorpusEntry& entry,
                      const MaskVolume& pred, const MaskVolume& truth) {
  if (pred.dims != truth.dims)
    throw DataError("study " + entry.study_id +
                    ": predicted and truth masks differ in dims");
  report.ct_type = entry.ct_type;
  report.reference_diameter_mm = entry.reference_diameter_mm;
  report.reference_aaa = entry.reference_aaa;
  report.dice = dice_score(pred, truth);
  finalize_report(report);
}

FoldSplit split_for_rotation(const FoldPlan& plan, int rotation) {
  const FoldRoles roles = plan.roles(rotation);
  FoldSplit s;
  for (int f : roles.train)
    for (auto& id : plan.studies_in(f)) s.train.push_back(id);
  s.validation = plan.studies_in(roles.validation);
  for (int f : roles.test)
    for (auto& id : plan.studies_in(f)) s.test.push_back(id);
  for (auto* v : {&s.train, &s.validation, &s.test})
    std::sort(v->begin(), v->end());
  return s;
}

namespace {

std::vector<TrainingExample> load_examples(const fs::path& dir,
                                           const CorpusManifest& manifest,
                                           const std::vector<std::string>& ids,
                                           const UNetConfig& config) {
  std::vector<TrainingExample> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const CorpusEntry& e = manifest.find(id);
    const auto volume = pad_to_grid(read_volume(dir / e.volume), config.levels);
    const auto mask = pad_to_grid(read_mask(dir / e.mask), config.levels);
    out.push_back(make_example(id, volume.grid, mask.grid, config));
  }
  return out;
}

}  // namespace

TrainOutcome train_split(const fs::path& corpus_dir,
                         const CorpusManifest& manifest, const FoldSplit& split,
                         const RunConfig& config, int rotation,
                         std::function<void(const EpochRecord&)> on_epoch) {
  TrainOutcome out;
  out.split = split;
  if (split.train.empty() || split.validation.empty())
    throw DataError("empty training or validation set");
  const auto train_set =
      load_examples(corpus_dir, manifest, split.train, config.network);
  const auto val_set =
      load_examples(corpus_dir, manifest, split.validation, config.network);
  TrainOptions opts;
  opts.epochs = config.epochs;
  opts.seed = mix_seed(config.seed, static_cast<std::uint64_t>(rotation));
  opts.optimizer = config.optimizer;
  opts.threads = config.threads;
  opts.on_epoch = std::move(on_epoch);
  out.result = train(config.network, build<float>(config.network, opts.seed),
                     train_set, val_set, opts);
  return out;
}

TrainOutcome train_rotation(const fs::path& corpus_dir,
                            const CorpusManifest& manifest,
                            const FoldPlan& plan, const RunConfig& config,
                            int rotation,
                            std::function<void(const EpochRecord&)> on_epoch) {
  return train_split(corpus_dir, manifest, split_for_rotation(plan, rotation),
                     config, rotation, std::move(on_epoch));
}

std::vector<MeasuredStudy> evaluate_studies(
    const WeightStore<float>& weights, const RunConfig& config,
    const fs::path& corpus_dir, const CorpusManifest& manifest,
    const std::vector<std::string>& study_ids, int fold) {
  std::vector<MeasuredStudy> out(study_ids.size());
  parallel_for(study_ids.size(), config.threads, [&](std::size_t i) {
    const CorpusEntry& e = manifest.find(study_ids[i]);
    const MaskVolume pred =
        predict_mask(weights, config.network, read_volume(corpus_dir / e.volume),
                     config.z_crop, config.threshold);
    out[i] = measure_mask(e.study_id, pred);
    out[i].report.fold = fold;
    attach_reference(out[i].report, e, pred, read_mask(corpus_dir / e.mask));
  });
  return out;
}

namespace {

std::string num(const std::optional<double>& v) {
  if (!v) return "none";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

}  // namespace

std::string per_study_csv(const std::vector<StudyReport>& reports) {
  std::ostringstream os;
  os << "study_id,ct_type,fold,max_diameter_mm,reference_diameter_mm,delta_mm,"
        "dice,predicted_aaa,reference_aaa,no_aorta_found\n";
  for (const auto& r : reports)
    os << r.study_id << ',' << to_string(r.ct_type) << ',' << r.fold << ','
       << num(r.max_diameter_mm) << ',' << num(r.reference_diameter_mm) << ','
       << num(r.delta_mm) << ',' << num(r.dice) << ',' << int(r.predicted_aaa)
       << ','
       << (r.reference_aaa ? std::to_string(int(*r.reference_aaa)) : "none")
       << ',' << int(r.no_aorta_found) << '\n';
  return os.str();
}

EvalTables eval_tables(const std::vector<StudyReport>& reports) {
  EvalTables t;
  t.by_ct = summary_csv(aggregate_report(reports, Grouping::kCtType));
  const bool has_folds = std::all_of(reports.begin(), reports.end(),
                                     [](const auto& r) { return r.fold >= 0; });
  if (has_folds && !reports.empty())
    t.by_fold = summary_csv(aggregate_report(reports, Grouping::kFold));
  t.overall = summary_csv(aggregate_report(reports, Grouping::kOverall));
  t.stratified = stratified_csv(stratified_sensitivity(reports));
  t.per_study = per_study_csv(reports);
  return t;
}

void write_eval_tables(const fs::path& dir, const EvalTables& t) {
  write_text(dir / "summary_by_ct.csv", t.by_ct);
  if (!t.by_fold.empty()) write_text(dir / "summary_by_fold.csv", t.by_fold);
  write_text(dir / "summary_overall.csv", t.overall);
  write_text(dir / "stratified_sensitivity.csv", t.stratified);
  write_text(dir / "per_study.csv", t.per_study);
}

std::string fold_roles_csv(int k) {
  auto join = [](const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i)
      s += (i ? " " : "") + std::to_string(v[i]);
    return s;
  };
  std::ostringstream os;
  os << "rotation,train_folds,validation_fold,test_folds\n";
  for (int n = 0; n < k; ++n) {
    const FoldRoles r = fold_roles(n, k);
    os << n << ',' << join(r.train) << ',' << r.validation << ','
       << join(r.test) << '\n';
  }
  return os.str();
}

}  // namespace aaa
