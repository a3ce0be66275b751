#include "aaa/detect.hpp"

#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include "aaa/error.hpp"

namespace aaa {

std::string to_string(CtType t) {
  return t == CtType::kContrast ? "contrast" : "noncontrast";
}

CtType ct_type_from_string(const std::string& s) {
  if (s == "contrast") return CtType::kContrast;
  if (s == "noncontrast") return CtType::kNonContrast;
  throw DataError("unknown ct type '" + s + "'");
}

Classification classify_aaa(std::optional<double> d) {
  if (!d) return {false, true};
  if (*d < 0.0 || std::isnan(*d))
    throw std::invalid_argument("diameter must be non-negative");
  return {*d > kAaaThresholdMm, false};
}

void finalize_report(StudyReport& r) {
  const Classification c = classify_aaa(r.max_diameter_mm);
  r.predicted_aaa = c.positive;
  r.no_aorta_found = c.no_aorta_found;
  if (r.max_diameter_mm && r.reference_diameter_mm)
    r.delta_mm = *r.max_diameter_mm - *r.reference_diameter_mm;
  else
    r.delta_mm.reset();
}

double dice_score(const MaskVolume& pred, const MaskVolume& ref) {
  if (pred.dims != ref.dims)
    throw std::invalid_argument("dice_score: mask dims differ");
  std::size_t inter = 0, np = 0, ng = 0;
  for (std::size_t i = 0; i < pred.voxels.size(); ++i) {
    const bool p = pred.voxels[i] != 0, g = ref.voxels[i] != 0;
    np += p;
    ng += g;
    inter += p && g;
  }
  if (np + ng == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(np + ng);
}

ConfusionMetrics confusion_metrics(const std::vector<StudyReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("no reports to score");
  ConfusionMetrics m;
  for (const auto& r : reports) {
    if (!r.reference_aaa)
      throw DataError("study " + r.study_id + " has no reference label");
    if (*r.reference_aaa)
      (r.predicted_aaa ? m.counts.tp : m.counts.fn)++;
    else
      (r.predicted_aaa ? m.counts.fp : m.counts.tn)++;
  }
  if (m.counts.tp + m.counts.fn > 0)
    m.sensitivity = static_cast<double>(m.counts.tp) / (m.counts.tp + m.counts.fn);
  if (m.counts.tn + m.counts.fp > 0)
    m.specificity = static_cast<double>(m.counts.tn) / (m.counts.tn + m.counts.fp);
  return m;
}

std::string DiameterBin::label() const {
  std::ostringstream os;
  if (hi)
    os << lo << '-' << *hi - 1 << " mm";
  else
    os << ">=" << lo << " mm";
  return os.str();
}

std::vector<DiameterBin> default_bins() {
  return {{30.0, 40.0}, {40.0, 50.0}, {50.0, std::nullopt}};
}

std::vector<BinSensitivity> stratified_sensitivity(
    const std::vector<StudyReport>& reports,
    const std::vector<DiameterBin>& bins) {
  std::vector<BinSensitivity> out;
  for (const auto& bin : bins) out.push_back({bin, 0, 0, std::nullopt});
  for (const auto& r : reports) {
    if (!r.reference_aaa || !*r.reference_aaa) continue;
    if (!r.reference_diameter_mm)
      throw DataError("positive study " + r.study_id +
                      " has no reference diameter");
    const double d = *r.reference_diameter_mm;
    for (auto& b : out)
      if (d >= b.bin.lo && (!b.bin.hi || d < *b.bin.hi)) {
        ++b.positives;
        b.detected += r.predicted_aaa;
        break;
      }
  }
  for (auto& b : out)
    if (b.positives > 0)
      b.sensitivity = static_cast<double>(b.detected) / b.positives;
  return out;
}

GroupStats describe(const std::vector<double>& values) {
  GroupStats s;
  s.n = values.size();
  if (s.n == 0) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(s.n);
  if (s.n > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(sq / static_cast<double>(s.n - 1));
  }
  return s;
}

double pooled_std(const std::vector<std::pair<std::size_t, double>>& groups) {
  if (groups.empty()) throw std::invalid_argument("pooled_std: no groups");
  double num = 0.0, den = 0.0;
  for (const auto& [n, s] : groups) {
    if (n < 2)
      throw std::invalid_argument("pooled_std: every group needs n >= 2");
    num += static_cast<double>(n - 1) * s * s;
    den += static_cast<double>(n - 1);
  }
  return std::sqrt(num / den);
}

namespace {

SummaryRow summarize(const std::string& label,
                     const std::vector<const StudyReport*>& members) {
  SummaryRow row;
  row.group = label;
  row.n = members.size();
  std::vector<double> dice, delta;
  std::vector<StudyReport> copies;
  for (const auto* r : members) {
    dice.push_back(*r->dice);
    if (r->delta_mm) delta.push_back(*r->delta_mm);
    copies.push_back(*r);
  }
  row.dice = describe(dice);
  row.delta = describe(delta);
  if (!copies.empty()) {
    const ConfusionMetrics m = confusion_metrics(copies);
    row.sensitivity = m.sensitivity;
    row.specificity = m.specificity;
  }
  return row;
}

double pool_rows(const std::vector<SummaryRow>& rows, GroupStats SummaryRow::*f,
                 double fallback) {
  std::vector<std::pair<std::size_t, double>> g;
  for (const auto& r : rows)
    if ((r.*f).n >= 2) g.emplace_back((r.*f).n, (r.*f).std);
  return g.empty() ? fallback : pooled_std(g);
}

}  // namespace

std::vector<SummaryRow> aggregate_report(const std::vector<StudyReport>& reports,
                                         Grouping grouping) {
  if (reports.empty()) throw std::invalid_argument("no reports to aggregate");
  for (const auto& r : reports) {
    if (!r.dice) throw DataError("study " + r.study_id + " has no dice score");
    if (!r.reference_aaa)
      throw DataError("study " + r.study_id + " has no reference label");
    if (grouping == Grouping::kFold && r.fold < 0)
      throw DataError("study " + r.study_id + " has no fold index");
  }
  std::vector<const StudyReport*> all;
  for (const auto& r : reports) all.push_back(&r);
  SummaryRow overall = summarize("All", all);
  if (grouping == Grouping::kOverall) return {overall};

  std::map<int, std::vector<const StudyReport*>> groups;
  for (const auto& r : reports)
    groups[grouping == Grouping::kFold ? r.fold
                                       : static_cast<int>(r.ct_type)]
        .push_back(&r);
  std::vector<SummaryRow> rows;
  for (const auto& [key, members] : groups)
    rows.push_back(summarize(grouping == Grouping::kFold
                                 ? std::to_string(key)
                                 : to_string(static_cast<CtType>(key)),
                             members));
  overall.dice.std = pool_rows(rows, &SummaryRow::dice, overall.dice.std);
  overall.delta.std = pool_rows(rows, &SummaryRow::delta, overall.delta.std);
  rows.push_back(overall);
  return rows;
}

namespace {

std::string opt_str(const std::optional<double>& v) {
  if (!v) return "none";
  std::ostringstream os;
  os.precision(17);
  os << *v;
  return os.str();
}

}  // namespace

std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::ostringstream os;
  os.precision(17);
  os << "group,n,dice_mean,dice_std,delta_n,delta_mean_mm,delta_std_mm,"
        "sensitivity,specificity\n";
  for (const auto& r : rows)
    os << r.group << ',' << r.n << ',' << r.dice.mean << ',' << r.dice.std
       << ',' << r.delta.n << ',' << r.delta.mean << ',' << r.delta.std << ','
       << opt_str(r.sensitivity) << ',' << opt_str(r.specificity) << '\n';
  return os.str();
}

std::string stratified_csv(const std::vector<BinSensitivity>& bins) {
  std::ostringstream os;
  os.precision(17);
  os << "bin,positives,detected,sensitivity\n";
  for (const auto& b : bins)
    os << b.bin.label() << ',' << b.positives << ',' << b.detected << ','
       << opt_str(b.sensitivity) << '\n';
  return os.str();
}

}  // namespace aaa
