#pragma once

#include <optional>
#include <string>
#include <vector>

#include "aaa/volume.hpp"

namespace aaa {

inline constexpr double kAaaThresholdMm = 30.0;

enum class CtType { kContrast, kNonContrast };

std::string to_string(CtType t);
CtType ct_type_from_string(const std::string& s);

struct Classification {
  bool positive = false;
  bool no_aorta_found = false;
};

// Positive iff the diameter is strictly greater than 30 mm. An absent
// diameter is negative and flagged.
Classification classify_aaa(std::optional<double> max_diameter_mm);

struct StudyReport {
  std::string study_id;
  std::optional<double> max_diameter_mm;
  std::optional<double> reference_diameter_mm;
  bool predicted_aaa = false;
  bool no_aorta_found = false;
  std::optional<bool> reference_aaa;
  std::optional<double> dice;
  std::optional<double> delta_mm;
  CtType ct_type = CtType::kContrast;
  int fold = -1;
};

// Fills predicted_aaa / no_aorta_found from the diameter and delta_mm from
// the two diameters when both are present.
void finalize_report(StudyReport& report);

// 2|P n G| / (|P| + |G|); two empty masks score 1.
double dice_score(const MaskVolume& pred, const MaskVolume& ref);

struct ConfusionCounts {
  int tp = 0, fn = 0, tn = 0, fp = 0;
};

struct ConfusionMetrics {
  std::optional<double> sensitivity;  // absent when TP + FN == 0
  std::optional<double> specificity;  // absent when TN + FP == 0
  ConfusionCounts counts;
};

ConfusionMetrics confusion_metrics(const std::vector<StudyReport>& reports);

struct DiameterBin {
  double lo;
  std::optional<double> hi;  // absent = unbounded
  std::string label() const;
};

std::vector<DiameterBin> default_bins();  // [30,40), [40,50), [50,inf)

struct BinSensitivity {
  DiameterBin bin;
  int positives = 0;
  int detected = 0;
  std::optional<double> sensitivity;
};

// Sensitivity of reference-positive studies binned (left-closed) by their
// reference diameter.
std::vector<BinSensitivity> stratified_sensitivity(
    const std::vector<StudyReport>& reports,
    const std::vector<DiameterBin>& bins = default_bins());

struct GroupStats {
  std::size_t n = 0;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1)
};

GroupStats describe(const std::vector<double>& values);

// sqrt(sum (n_i - 1) s_i^2 / sum (n_i - 1)); every n_i must be >= 2.
double pooled_std(const std::vector<std::pair<std::size_t, double>>& groups);

enum class Grouping { kCtType, kFold, kOverall };

struct SummaryRow {
  std::string group;
  std::size_t n = 0;
  GroupStats dice;
  GroupStats delta;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
};

// Rows for the requested grouping, in a fixed order: ct types as
// contrast, noncontrast; folds ascending; followed by an "All" row in both
// cases. Overall grouping yields only the "All" row. The "All" row's
// standard deviations pool the group rows when grouped.
std::vector<SummaryRow> aggregate_report(const std::vector<StudyReport>& reports,
                                         Grouping grouping);

std::string summary_csv(const std::vector<SummaryRow>& rows);
std::string stratified_csv(const std::vector<BinSensitivity>& bins);

}  // namespace aaa
