#include <gtest/gtest.h>

#include <cmath>

#include "aaa/detect.hpp"
#include "aaa/error.hpp"
#include "support.hpp"

namespace aaa {
namespace {

StudyReport report(std::string id, std::optional<double> pred, double ref,
                   CtType ct = CtType::kContrast, int fold = -1,
                   double dice = 0.9) {
  StudyReport r;
  r.study_id = std::move(id);
  r.max_diameter_mm = pred;
  r.reference_diameter_mm = ref;
  r.reference_aaa = ref > kAaaThresholdMm;
  r.dice = dice;
  r.ct_type = ct;
  r.fold = fold;
  finalize_report(r);
  return r;
}

TEST(Classify, StrictThreshold) {
  EXPECT_TRUE(classify_aaa(30.1).positive);
  EXPECT_FALSE(classify_aaa(29.9).positive);
  EXPECT_FALSE(classify_aaa(30.0).positive);
  const Classification none = classify_aaa(std::nullopt);
  EXPECT_FALSE(none.positive);
  EXPECT_TRUE(none.no_aorta_found);
  EXPECT_FALSE(classify_aaa(12.0).no_aorta_found);
  EXPECT_THROW(classify_aaa(-1.0), std::invalid_argument);
}

TEST(Classify, Monotone) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    double a = rng.uniform(0, 60), b = rng.uniform(0, 60);
    if (a > b) std::swap(a, b);
    if (classify_aaa(a).positive) {
      EXPECT_TRUE(classify_aaa(b).positive);
    }
  }
}

TEST(Report, FinalizeFillsDerivedFields) {
  StudyReport r;
  r.max_diameter_mm = 41.5;
  r.reference_diameter_mm = 40.0;
  finalize_report(r);
  EXPECT_TRUE(r.predicted_aaa);
  EXPECT_DOUBLE_EQ(*r.delta_mm, 1.5);
  r.max_diameter_mm.reset();
  finalize_report(r);
  EXPECT_FALSE(r.predicted_aaa);
  EXPECT_TRUE(r.no_aorta_found);
  EXPECT_FALSE(r.delta_mm);
}

MaskVolume mask_with(std::size_t n, std::size_t offset, std::size_t total = 300) {
  MaskVolume m({total, 1, 1}, {1, 1, 1});
  for (std::size_t i = 0; i < n; ++i) m.voxels[offset + i] = 1;
  return m;
}

TEST(Dice, Examples) {
  EXPECT_EQ(dice_score(mask_with(50, 3), mask_with(50, 3)), 1.0);
  EXPECT_EQ(dice_score(mask_with(50, 0), mask_with(50, 100)), 0.0);
  EXPECT_DOUBLE_EQ(dice_score(mask_with(100, 0), mask_with(100, 20)), 0.8);
  EXPECT_EQ(dice_score(mask_with(0, 0), mask_with(0, 0)), 1.0);
  EXPECT_THROW(dice_score(mask_with(1, 0, 10), mask_with(1, 0, 11)),
               std::invalid_argument);
}

TEST(Dice, SymmetricAndOneOnlyWhenIdentical) {
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    MaskVolume a({6, 5, 2}, {1, 1, 1}), b({6, 5, 2}, {1, 1, 1});
    for (auto& v : a.voxels) v = rng.uniform() < 0.4;
    b = a;
    if (i % 2) b.voxels[rng.below(b.voxels.size())] ^= 1;
    const double ab = dice_score(a, b), ba = dice_score(b, a);
    EXPECT_EQ(ab, ba);
    if (foreground_count(a) + foreground_count(b) > 0) {
      EXPECT_EQ(ab == 1.0, a == b);
    }
  }
}

TEST(Confusion, Counts) {
  std::vector<StudyReport> rs;
  for (int i = 0; i < 20; ++i)
    rs.push_back(report("p" + std::to_string(i), i < 17 ? 35.0 : 25.0, 40.0));
  for (int i = 0; i < 20; ++i)
    rs.push_back(report("n" + std::to_string(i), i < 19 ? 20.0 : 33.0, 20.0));
  const auto m = confusion_metrics(rs);
  EXPECT_DOUBLE_EQ(*m.sensitivity, 0.85);
  EXPECT_DOUBLE_EQ(*m.specificity, 0.95);
  EXPECT_EQ(m.counts.tp, 17);
  EXPECT_EQ(m.counts.fp, 1);
}

TEST(Confusion, AllCorrectAndUndefinedRatios) {
  std::vector<StudyReport> rs = {report("a", 45.0, 44.0), report("b", 20.0, 21.0)};
  const auto m = confusion_metrics(rs);
  EXPECT_EQ(*m.sensitivity, 1.0);
  EXPECT_EQ(*m.specificity, 1.0);
  const auto only_pos = confusion_metrics({report("a", 45.0, 44.0)});
  EXPECT_FALSE(only_pos.specificity);
  EXPECT_EQ(*only_pos.sensitivity, 1.0);
  EXPECT_THROW(confusion_metrics({}), std::invalid_argument);
  StudyReport unlabeled;
  EXPECT_THROW(confusion_metrics({unlabeled}), DataError);
}

TEST(Confusion, InvariantUnderOrderAndRelabeling) {
  Rng rng(3);
  std::vector<StudyReport> rs;
  for (int i = 0; i < 60; ++i)
    rs.push_back(report("s" + std::to_string(i), rng.uniform(15, 50), rng.uniform(15, 50)));
  const auto base = confusion_metrics(rs);
  rng.shuffle(rs.begin(), rs.end());
  for (std::size_t i = 0; i < rs.size(); ++i) rs[i].study_id = "x" + std::to_string(i * 7);
  const auto moved = confusion_metrics(rs);
  EXPECT_EQ(base.sensitivity, moved.sensitivity);
  EXPECT_EQ(base.specificity, moved.specificity);
}

TEST(Stratified, SingleStudyAndLabels) {
  const auto bins = stratified_sensitivity({report("a", 44.0, 45.0)});
  ASSERT_EQ(bins.size(), 3u);
  EXPECT_EQ(bins[0].bin.label(), "30-39 mm");
  EXPECT_EQ(bins[1].bin.label(), "40-49 mm");
  EXPECT_EQ(bins[2].bin.label(), ">=50 mm");
  EXPECT_FALSE(bins[0].sensitivity);
  EXPECT_EQ(*bins[1].sensitivity, 1.0);
  EXPECT_FALSE(bins[2].sensitivity);
}

TEST(Stratified, LeftClosedEdges) {
  const auto bins = stratified_sensitivity({report("a", 31.0, 40.0), report("b", 20.0, 50.0)});
  EXPECT_EQ(bins[1].positives, 1);
  EXPECT_EQ(*bins[1].sensitivity, 1.0);
  EXPECT_EQ(bins[2].positives, 1);
  EXPECT_EQ(*bins[2].sensitivity, 0.0);
}

TEST(Stratified, MatchesFilterAndCountOracle) {
  Rng rng(4);
  std::vector<StudyReport> rs;
  for (int i = 0; i < 300; ++i)
    rs.push_back(report("s" + std::to_string(i), rng.uniform(20, 70), rng.uniform(20, 70)));
  const auto bins = stratified_sensitivity(rs);
  const double edges[] = {30, 40, 50, 1e300};
  for (int b = 0; b < 3; ++b) {
    int pos = 0, det = 0;
    for (const auto& r : rs) {
      const double d = *r.reference_diameter_mm;
      if (d > 30 && d >= edges[b] && d < edges[b + 1]) {
        ++pos;
        det += r.predicted_aaa;
      }
    }
    EXPECT_EQ(bins[b].positives, pos);
    EXPECT_EQ(bins[b].detected, det);
    ASSERT_TRUE(bins[b].sensitivity);
    EXPECT_DOUBLE_EQ(*bins[b].sensitivity, double(det) / pos);
  }
}

TEST(PooledStd, ClosedFormCases) {
  EXPECT_DOUBLE_EQ(pooled_std({{64, 0.1}, {64, 0.1}}), 0.1);
  EXPECT_DOUBLE_EQ(pooled_std({{2, 0.0}, {2, 2.0}}), std::sqrt(2.0));
  EXPECT_THROW(pooled_std({{1, 0.3}, {5, 0.2}}), std::invalid_argument);
  EXPECT_THROW(pooled_std({}), std::invalid_argument);
}

TEST(PooledStd, IdenticalStdsAndDirectOracle) {
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    const double s = rng.uniform(0.01, 3.0);
    std::vector<std::pair<std::size_t, double>> g;
    for (int k = 0; k < 5; ++k) g.emplace_back(2 + rng.below(80), s);
    EXPECT_NEAR(pooled_std(g), s, 1e-12);
  }
  // Five folds of synthetic values: pooled std equals the within-group
  // sum of squares over total degrees of freedom.
  std::vector<std::pair<std::size_t, double>> g;
  double ss = 0.0, dof = 0.0;
  for (int k = 0; k < 5; ++k) {
    std::vector<double> v;
    for (std::size_t j = 0; j < 10 + std::size_t(k); ++j) v.push_back(rng.normal() + k);
    const GroupStats st = describe(v);
    g.emplace_back(st.n, st.std);
    for (double x : v) ss += (x - st.mean) * (x - st.mean);
    dof += double(v.size() - 1);
  }
  EXPECT_NEAR(pooled_std(g), std::sqrt(ss / dof), 1e-12);
}

TEST(Describe, SampleStandardDeviation) {
  const GroupStats s = describe({1.0, 2.0, 3.0, 4.0});
  EXPECT_EQ(s.n, 4u);
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_DOUBLE_EQ(s.std, std::sqrt(5.0 / 3.0));
  EXPECT_EQ(describe({7.0}).std, 0.0);
}

TEST(Aggregate, SingleStudy) {
  const auto rows = aggregate_report({report("a", 33.0, 31.0, CtType::kContrast, -1, 0.91)},
                                     Grouping::kOverall);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].group, "All");
  EXPECT_DOUBLE_EQ(rows[0].dice.mean, 0.91);
  EXPECT_EQ(rows[0].dice.std, 0.0);
  EXPECT_DOUBLE_EQ(rows[0].delta.mean, 2.0);
  EXPECT_EQ(rows[0].delta.std, 0.0);
}

TEST(Aggregate, CtGroupsAndWeightedMean) {
  std::vector<StudyReport> rs = {
      report("a", 33, 31, CtType::kNonContrast, -1, 0.7),
      report("b", 20, 22, CtType::kContrast, -1, 0.9),
      report("c", 41, 40, CtType::kContrast, -1, 0.8),
      report("d", 19, 18, CtType::kNonContrast, -1, 0.6),
      report("e", 35, 36, CtType::kNonContrast, -1, 0.5)};
  const auto rows = aggregate_report(rs, Grouping::kCtType);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].group, "contrast");
  EXPECT_EQ(rows[1].group, "noncontrast");
  EXPECT_EQ(rows[2].group, "All");
  EXPECT_EQ(rows[2].n, 5u);
  EXPECT_NEAR(rows[2].dice.mean,
              (rows[0].n * rows[0].dice.mean + rows[1].n * rows[1].dice.mean) / 5.0,
              1e-15);
  EXPECT_NEAR(rows[2].dice.std,
              pooled_std({{rows[0].n, rows[0].dice.std}, {rows[1].n, rows[1].dice.std}}),
              1e-15);
}

TEST(Aggregate, FoldRowsRecombine) {
  Rng rng(6);
  std::vector<StudyReport> rs;
  for (int f = 0; f < 5; ++f)
    for (int i = 0; i < 8 + f; ++i)
      rs.push_back(report("s" + std::to_string(rs.size()), rng.uniform(15, 50),
                          rng.uniform(15, 50), CtType::kContrast, f,
                          rng.uniform(0.5, 1.0)));
  const auto rows = aggregate_report(rs, Grouping::kFold);
  ASSERT_EQ(rows.size(), 6u);
  std::vector<std::pair<std::size_t, double>> dice_g, delta_g;
  std::vector<double> all_dice;
  for (int f = 0; f < 5; ++f) {
    EXPECT_EQ(rows[f].group, std::to_string(f));
    std::vector<double> d, dl;
    for (const auto& r : rs)
      if (r.fold == f) {
        d.push_back(*r.dice);
        dl.push_back(*r.delta_mm);
        all_dice.push_back(*r.dice);
      }
    const GroupStats sd = describe(d), sdl = describe(dl);
    EXPECT_NEAR(rows[f].dice.mean, sd.mean, 1e-15);
    EXPECT_NEAR(rows[f].dice.std, sd.std, 1e-15);
    dice_g.emplace_back(sd.n, sd.std);
    delta_g.emplace_back(sdl.n, sdl.std);
  }
  EXPECT_EQ(rows[5].n, rs.size());
  EXPECT_NEAR(rows[5].dice.mean, describe(all_dice).mean, 1e-15);
  EXPECT_NEAR(rows[5].dice.std, pooled_std(dice_g), 1e-15);
  EXPECT_NEAR(rows[5].delta.std, pooled_std(delta_g), 1e-15);
}

TEST(Aggregate, MissingFieldsNameStudy) {
  StudyReport r = report("lonely", 30, 31);
  r.dice.reset();
  try {
    aggregate_report({r}, Grouping::kOverall);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("lonely"), std::string::npos);
  }
  EXPECT_THROW(aggregate_report({report("x", 30, 31)}, Grouping::kFold), DataError);
}

TEST(Csv, NoneForAbsentValues) {
  const auto rows = aggregate_report({report("a", 45.0, 44.0)}, Grouping::kOverall);
  const std::string csv = summary_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "group,n,dice_mean,dice_std,delta_n,delta_mean_mm,delta_std_mm,"
            "sensitivity,specificity");
  EXPECT_NE(csv.find(",none"), std::string::npos);
  const std::string st = stratified_csv(stratified_sensitivity({report("a", 45.0, 44.0)}));
  EXPECT_NE(st.find("30-39 mm,0,0,none"), std::string::npos) << st;
}

}  // namespace
}  // namespace aaa
