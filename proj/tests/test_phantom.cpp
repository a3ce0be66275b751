#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <map>
#include <set>

#include "aaa/error.hpp"
#include "aaa/geometry.hpp"
#include "aaa/phantom.hpp"

namespace aaa {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

TEST(Phantom, StraightTubeMatchesDiscVoxelization) {
  PhantomSpec s;
  s.dims = {40, 36, 6};
  s.spacing = {1.0, 1.0, 2.0};
  s.base_radius_mm = 8.0;
  s.noise_sigma = 0.0;
  s.body_fraction = 0.0;
  s.fat_sleeve_mm = 0.0;
  const PhantomStudy st = generate(s);
  const double cx = 19.5, cy = 17.5;
  for (std::size_t z = 0; z < 6; ++z)
    for (std::size_t y = 0; y < 36; ++y)
      for (std::size_t x = 0; x < 40; ++x) {
        const double r2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        ASSERT_EQ(st.truth_mask.at(x, y, z), r2 <= 64.0 ? 1 : 0) << x << ',' << y;
        ASSERT_EQ(st.volume.at(x, y, z), r2 <= 64.0 ? kContrastLumen : kSoftTissue);
      }
  EXPECT_EQ(st.analytic_max_diameter_mm, 16.0);
  EXPECT_FALSE(st.reference_aaa);
}

TEST(Phantom, BodyOutlineSurroundsTissue) {
  PhantomSpec s;
  s.dims = {40, 30, 2};
  s.base_radius_mm = 6.0;
  s.noise_sigma = 0.0;
  s.fat_sleeve_mm = 0.0;
  const PhantomStudy st = generate(s);
  // Body ellipse centred at (19.5, 14.5) with semi-axes 0.94 * (20, 15).
  for (std::size_t y = 0; y < 30; ++y)
    for (std::size_t x = 0; x < 40; ++x) {
      const double u = (x - 19.5) / 18.8, v = (y - 14.5) / 14.1;
      const float want = st.truth_mask.at(x, y, 1)
                             ? kContrastLumen
                             : (u * u + v * v <= 1.0 ? kSoftTissue : kExterior);
      ASSERT_EQ(st.volume.at(x, y, 1), static_cast<float>(want)) << x << ',' << y;
    }
  EXPECT_EQ(st.volume.at(0, 0, 0), kExterior);
  EXPECT_EQ(st.volume.at(19, 0, 0), kExterior);
  EXPECT_EQ(st.volume.at(19, 1, 0), kSoftTissue);
  s.body_fraction = 1.5;
  EXPECT_THROW(generate(s), DataError);
}

TEST(Phantom, FatSleeveHugsTheWall) {
  PhantomSpec s;
  s.dims = {48, 48, 8};
  s.spacing = {0.9, 0.9, 3.0};
  s.base_radius_mm = 9.0;
  s.aneurysm = AneurysmSpec{10.5, 4.0, 8.0};
  s.tilt_deg = 15.0;
  s.noise_sigma = 0.0;
  s.contrast = CtType::kNonContrast;
  const PhantomStudy st = generate(s);
  int fat = 0;
  for (std::size_t z = 0; z < 8; ++z)
    for (std::size_t y = 0; y < 48; ++y)
      for (std::size_t x = 0; x < 48; ++x) {
        const double d = wall_distance(s, x, y, z);
        const float v = st.volume.at(x, y, z);
        ASSERT_EQ(st.truth_mask.at(x, y, z) != 0, d <= 0.0);
        if (d <= 0.0) {
          ASSERT_EQ(v, kNonContrastLumen);
        } else if (d <= 3.0) {
          ASSERT_EQ(v, kFat);
          ++fat;
        } else {
          ASSERT_TRUE(v == kSoftTissue || v == kExterior);
        }
      }
  EXPECT_GT(fat, 0);
  s.fat_sleeve_mm = -1.0;
  EXPECT_THROW(generate(s), DataError);
}

TEST(Phantom, AnalyticDiameter) {
  PhantomSpec s;
  s.base_radius_mm = 12.0;
  s.aneurysm = AneurysmSpec{20.0, 8.0, 10.0};
  EXPECT_EQ(analytic_max_diameter(s), 40.0);
  s.tilt_deg = 20.0;
  EXPECT_EQ(analytic_max_diameter(s), 40.0);
  s.aneurysm.reset();
  EXPECT_EQ(analytic_max_diameter(s), 24.0);
  s.base_radius_mm = 15.5;
  EXPECT_TRUE(generate(s).reference_aaa);
}

TEST(Phantom, BulgePeaksAtCenter) {
  PhantomSpec s;
  s.base_radius_mm = 10.0;
  s.aneurysm = AneurysmSpec{31.0, 6.0, 8.0};
  // Mid-height is 31 mm for 32 slices of 2 mm, so the peak sits at s = 0.
  EXPECT_DOUBLE_EQ(tube_radius(s, 0.0), 16.0);
  EXPECT_NEAR(tube_radius(s, 8.0), 10.0 + 6.0 * std::exp(-0.5), 1e-12);
  EXPECT_EQ(tube_radius(s, 8.0), tube_radius(s, -8.0));
}

TEST(Phantom, Deterministic) {
  PhantomSpec s;
  s.aneurysm = AneurysmSpec{30.0, 5.0, 9.0};
  s.tilt_deg = 12.0;
  s.tilt_azimuth_deg = 70.0;
  s.seed = 99;
  const PhantomStudy a = generate(s), b = generate(s);
  EXPECT_EQ(a.volume, b.volume);
  EXPECT_EQ(a.truth_mask, b.truth_mask);
  s.seed = 100;
  EXPECT_NE(generate(s).volume, a.volume);
  EXPECT_EQ(generate(s).truth_mask, a.truth_mask);
}

TEST(Phantom, RejectsTubeLeavingVolume) {
  PhantomSpec s;
  s.base_radius_mm = 31.0;
  EXPECT_THROW(generate(s), DataError);
  s.base_radius_mm = 10.0;
  s.tilt_deg = 60.0;
  EXPECT_THROW(generate(s), DataError);
  s.tilt_deg = 0.0;
  s.spacing = {1.0, 0.0, 1.0};
  EXPECT_THROW(generate(s), DataError);
  s.spacing = {1.0, 1.0, 1.0};
  s.aneurysm = AneurysmSpec{10.0, 2.0, 0.0};
  EXPECT_THROW(generate(s), DataError);
}

TEST(Phantom, VoxelCountApproximatesTubeVolume) {
  PhantomSpec s;
  s.dims = {96, 96, 48};
  s.spacing = {0.8, 0.8, 1.0};
  s.base_radius_mm = 9.0;
  s.aneurysm = AneurysmSpec{23.5, 7.0, 6.0};
  s.noise_sigma = 0.0;
  const PhantomStudy st = generate(s);
  // Volume of revolution of r(s) over the axial extent, by quadrature.
  double vol = 0.0;
  const double h = 47.0 / 4000.0;
  for (int i = 0; i < 4000; ++i) {
    const double r = tube_radius(s, -23.5 + (i + 0.5) * h);
    vol += std::numbers::pi * r * r * h;
  }
  // Voxels cover [z0 - sz/2, z1 + sz/2]; add the half slabs at each end.
  vol += std::numbers::pi * 81.0 * 1.0;
  const double voxels = foreground_count(st.truth_mask) * 0.8 * 0.8 * 1.0;
  EXPECT_NEAR(voxels / vol, 1.0, 0.05);
}

TEST(Corpus, BalanceAndDeterminism) {
  CorpusOptions o;
  const auto a = corpus_specs(50, o, 17), b = corpus_specs(50, o, 17);
  int pos = 0, con = 0;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].study_id, b[i].study_id);
    EXPECT_EQ(a[i].spacing.z, b[i].spacing.z);
    EXPECT_EQ(a[i].tilt_deg, b[i].tilt_deg);
    EXPECT_EQ(analytic_max_diameter(a[i]), analytic_max_diameter(b[i]));
    const double d = analytic_max_diameter(a[i]);
    const bool p = classify_aaa(d).positive;
    pos += p;
    con += a[i].contrast == CtType::kContrast;
    if (p) {
      EXPECT_GE(d, o.positive_diameter_min - 1e-9);
      EXPECT_LE(d, o.positive_diameter_max + 1e-9);
    } else {
      EXPECT_GE(d, o.negative_diameter_min - 1e-9);
      EXPECT_LE(d, o.negative_diameter_max + 1e-9);
    }
    EXPECT_GE(a[i].spacing.z, o.z_spacing_min);
    EXPECT_LE(a[i].spacing.z, o.z_spacing_max);
    EXPECT_LE(a[i].tilt_deg, o.max_tilt_deg);
    ids.insert(a[i].study_id);
    EXPECT_NO_THROW(validate(a[i]));
  }
  EXPECT_EQ(pos, 25);
  EXPECT_EQ(con, 25);
  EXPECT_EQ(ids.size(), 50u);
  const auto c = corpus_specs(50, o, 18);
  bool differs = false;
  for (std::size_t i = 0; i < c.size(); ++i)
    differs |= c[i].tilt_deg != a[i].tilt_deg;
  EXPECT_TRUE(differs);
}

TEST(Corpus, PatientsOwnConsecutiveStudies) {
  CorpusOptions o;
  o.paired_fraction = 0.5;
  const auto specs = corpus_specs(200, o, 3);
  std::map<std::string, int> per_patient;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    ++per_patient[specs[i].patient_id];
    if (i > 0 && specs[i].patient_id == specs[i - 1].patient_id && i > 1) {
      EXPECT_NE(specs[i - 1].patient_id, specs[i - 2].patient_id);
    }
  }
  int pairs = 0;
  for (const auto& [p, n] : per_patient) {
    EXPECT_LE(n, 2);
    pairs += n == 2;
  }
  EXPECT_GT(pairs, 0);
}

TEST(Corpus, TruthMeasurementWithinVoxelTolerance) {
  CorpusOptions o;
  const auto studies = corpus(40, o, 5, 1);
  for (const auto& st : studies) {
    const StudyMeasurement m = measure_study(st.truth_mask);
    ASSERT_TRUE(m.max_diameter_mm) << st.spec.study_id;
    const double sx = st.spec.spacing.x, sz = st.spec.spacing.z;
    const double tol = sx + 0.5 * sz * std::tan(st.spec.tilt_deg * kDeg);
    EXPECT_NEAR(*m.max_diameter_mm, st.analytic_max_diameter_mm, tol)
        << st.spec.study_id << " tilt " << st.spec.tilt_deg << " sz " << sz;
    EXPECT_EQ(st.reference_aaa, st.analytic_max_diameter_mm > kAaaThresholdMm);
  }
}

TEST(Corpus, ThreadCountDoesNotChangeOutput) {
  CorpusOptions o;
  const auto a = corpus(6, o, 11, 1), b = corpus(6, o, 11, 3);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].volume, b[i].volume);
    EXPECT_EQ(a[i].truth_mask, b[i].truth_mask);
  }
}

}  // namespace
}  // namespace aaa
