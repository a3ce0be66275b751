#include <algorithm>

#include "aaa/error.hpp"
#include "aaa/pipeline.hpp"

namespace aaa {

namespace {

Json to_json(const CorpusEntry& e) {
  Json j;
  j["study_id"] = e.study_id;
  j["patient_id"] = e.patient_id;
  j["ct_type"] = to_string(e.ct_type);
  j["volume"] = e.volume;
  j["mask"] = e.mask;
  j["dims"] = {e.dims.x, e.dims.y, e.dims.z};
  j["spacing_mm"] = {e.spacing.x, e.spacing.y, e.spacing.z};
  j["analytic_max_diameter_mm"] = e.analytic_max_diameter_mm;
  j["reference_diameter_mm"] = e.reference_diameter_mm
                                   ? Json(*e.reference_diameter_mm)
                                   : Json(nullptr);
  j["reference_aaa"] = e.reference_aaa;
  j["tilt_deg"] = e.tilt_deg;
  return j;
}

CorpusEntry entry_from_json(const Json& j) {
  CorpusEntry e;
  e.study_id = j.at("study_id").get<std::string>();
  e.patient_id = j.at("patient_id").get<std::string>();
  e.ct_type = ct_type_from_string(j.at("ct_type").get<std::string>());
  e.volume = j.at("volume").get<std::string>();
  e.mask = j.at("mask").get<std::string>();
  const auto& d = j.at("dims");
  e.dims = {d.at(0).get<std::size_t>(), d.at(1).get<std::size_t>(),
            d.at(2).get<std::size_t>()};
  const auto& s = j.at("spacing_mm");
  e.spacing = {s.at(0).get<double>(), s.at(1).get<double>(),
               s.at(2).get<double>()};
  e.analytic_max_diameter_mm = j.at("analytic_max_diameter_mm").get<double>();
  if (!j.at("reference_diameter_mm").is_null())
    e.reference_diameter_mm = j["reference_diameter_mm"].get<double>();
  e.reference_aaa = j.at("reference_aaa").get<bool>();
  e.tilt_deg = j.value("tilt_deg", 0.0);
  return e;
}

}  // namespace

const CorpusEntry& CorpusManifest::find(const std::string& study_id) const {
  for (const auto& e : studies)
    if (e.study_id == study_id) return e;
  throw DataError("study " + study_id + " is not in the corpus manifest");
}

std::vector<StudyRef> CorpusManifest::refs() const {
  std::vector<StudyRef> out;
  out.reserve(studies.size());
  for (const auto& e : studies) out.push_back({e.study_id, e.patient_id});
  return out;
}

CorpusEntry describe_study(const PhantomStudy& s) {
  CorpusEntry e;
  e.study_id = s.spec.study_id;
  e.patient_id = s.spec.patient_id;
  e.ct_type = s.spec.contrast;
  e.volume = "volumes/" + s.spec.study_id + ".json";
  e.mask = "masks/" + s.spec.study_id + ".json";
  e.dims = s.volume.dims;
  e.spacing = s.volume.spacing;
  e.analytic_max_diameter_mm = s.analytic_max_diameter_mm;
  e.reference_diameter_mm = measure_study(s.truth_mask).max_diameter_mm;
  e.reference_aaa = s.reference_aaa;
  e.tilt_deg = s.spec.tilt_deg;
  return e;
}

CorpusManifest write_corpus(const fs::path& dir,
                            const std::vector<PhantomStudy>& studies,
                            const Json& generator) {
  CorpusManifest m;
  m.generator = generator;
  Json list = Json::array();
  for (const auto& s : studies) {
    CorpusEntry e = describe_study(s);
    write_volume(dir / e.volume, s.volume);
    write_mask(dir / e.mask, s.truth_mask);
    list.push_back(to_json(e));
    m.studies.push_back(std::move(e));
  }
  Json j;
  j["format_version"] = kFormatVersion;
  j["generator"] = generator;
  j["studies"] = std::move(list);
  write_json(dir / "manifest.json", j);
  return m;
}

CorpusManifest read_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  const Json j = read_json(path);
  CorpusManifest m;
  try {
    if (j.at("format_version").get<int>() != kFormatVersion)
      throw DataError(path.string() + ": unsupported format_version");
    m.generator = j.value("generator", Json::object());
    for (const auto& e : j.at("studies")) m.studies.push_back(entry_from_json(e));
  } catch (const Json::exception& e) {
    throw DataError(path.string() + ": malformed manifest: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  std::vector<std::string> ids;
  for (const auto& e : m.studies) ids.push_back(e.study_id);
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
    throw DataError(path.string() + ": duplicate study id");
  return m;
}

}  // namespace aaa
