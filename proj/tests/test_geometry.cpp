#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "aaa/error.hpp"
#include "aaa/geometry.hpp"
#include "support.hpp"

namespace aaa {
namespace {

constexpr double kPi = std::numbers::pi;

using test::cylinder;
using test::ellipse_points;

// Orientation difference modulo pi.
double angle_error(double a, double b) {
  double d = std::fmod(std::abs(a - b), kPi);
  return std::min(d, kPi - d);
}

TEST(Components, KeepsLargest) {
  const std::size_t nx = 20, ny = 12;
  std::vector<std::uint8_t> s(nx * ny, 0);
  for (std::size_t y = 1; y < 6; ++y)
    for (std::size_t x = 1; x < 11; ++x) s[x + nx * y] = 1;  // 50 voxels
  for (std::size_t i = 0; i < 7; ++i) s[13 + i + nx * 9] = 1;  // 7 voxels
  std::vector<std::uint8_t> out;
  EXPECT_EQ(largest_component(s, nx, ny, out), 50u);
  for (std::size_t i = 0; i < 7; ++i) EXPECT_EQ(out[13 + i + nx * 9], 0);
  EXPECT_EQ(std::count(out.begin(), out.end(), 1), 50);

  const auto contour = extract_slice_contour(s, nx, ny, 1.0, 1.0);
  ASSERT_TRUE(contour);
  for (const auto& p : *contour) {
    EXPECT_LE(p.x, 10.5);
    EXPECT_LE(p.y, 5.5);
  }
}

TEST(Components, DiagonalNeighboursAreSeparate) {
  const std::vector<std::uint8_t> s = {1, 0, 0, 1};
  std::vector<std::uint8_t> out;
  EXPECT_EQ(largest_component(s, 2, 2, out), 1u);
  EXPECT_EQ(out, (std::vector<std::uint8_t>{1, 0, 0, 0}));
}

TEST(Contour, EmptySliceGivesNone) {
  const std::vector<std::uint8_t> s(25, 0);
  EXPECT_FALSE(extract_slice_contour(s, 5, 5, 1.0, 1.0));
}

TEST(Contour, SingleVoxelIsTooSmall) {
  std::vector<std::uint8_t> s(25, 0);
  s[12] = 1;  // diamond of 4 points
  EXPECT_FALSE(extract_slice_contour(s, 5, 5, 1.0, 1.0));
}

TEST(Contour, BlockAreaWithinHalfVoxelBand) {
  std::vector<std::uint8_t> s(49, 0);
  for (std::size_t y = 2; y < 5; ++y)
    for (std::size_t x = 2; x < 5; ++x) s[x + 7 * y] = 1;
  const auto c = extract_slice_contour(s, 7, 7, 1.0, 1.0);
  ASSERT_TRUE(c);
  const double area = polygon_area(*c);
  // Half-level iso-line: each of the four convex corners loses a 1/8 triangle.
  EXPECT_DOUBLE_EQ(area, 9.0 - 4.0 * 0.125);
  EXPECT_GT(area, 0.0);  // counter-clockwise
  EXPECT_NEAR(area, 9.0, 0.5 * 12.0);
  for (const auto& p : *c) {
    EXPECT_GE(p.x, 1.5);
    EXPECT_LE(p.x, 4.5);
  }
}

TEST(Contour, PhysicalSpacing) {
  std::vector<std::uint8_t> s(64, 0);
  for (std::size_t y = 2; y < 6; ++y)
    for (std::size_t x = 2; x < 6; ++x) s[x + 8 * y] = 1;
  const auto unit = extract_slice_contour(s, 8, 8, 1.0, 1.0);
  const auto scaled = extract_slice_contour(s, 8, 8, 0.5, 2.0);
  ASSERT_TRUE(unit && scaled);
  ASSERT_EQ(unit->size(), scaled->size());
  for (std::size_t i = 0; i < unit->size(); ++i) {
    EXPECT_DOUBLE_EQ((*scaled)[i].x, 0.5 * (*unit)[i].x);
    EXPECT_DOUBLE_EQ((*scaled)[i].y, 2.0 * (*unit)[i].y);
  }
}

TEST(Contour, DiscAreaMatchesPixelCount) {
  const std::size_t n = 41;
  std::vector<std::uint8_t> s(n * n, 0);
  std::size_t count = 0;
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      const double dx = x - 20.0, dy = y - 20.0;
      if (dx * dx + dy * dy <= 144.0) {
        s[x + n * y] = 1;
        ++count;
      }
    }
  const auto c = extract_slice_contour(s, n, n, 1.0, 1.0);
  ASSERT_TRUE(c);
  // Boundary length ~ 2 pi r; the iso-line sits within half a voxel.
  EXPECT_NEAR(polygon_area(*c), double(count), 0.5 * 2.0 * kPi * 12.5);
}

TEST(Ellipse, CircleRecovery) {
  const auto pts = ellipse_points({10, 10, 5, 5, 0}, 32);
  const EllipseParams e = fit_ellipse(pts);
  EXPECT_NEAR(e.cx, 10.0, 1e-9);
  EXPECT_NEAR(e.cy, 10.0, 1e-9);
  EXPECT_NEAR(e.a, 5.0, 1e-9);
  EXPECT_NEAR(e.b, 5.0, 1e-9);
}

TEST(Ellipse, GenerateAndRecover) {
  const EllipseParams truth{3, -4, 20, 8, 30.0 * kPi / 180.0};
  const EllipseParams e = fit_ellipse(ellipse_points(truth, 32, 0.1));
  EXPECT_NEAR(e.cx, truth.cx, 1e-6);
  EXPECT_NEAR(e.cy, truth.cy, 1e-6);
  EXPECT_NEAR(e.a, truth.a, 1e-6);
  EXPECT_NEAR(e.b, truth.b, 1e-6);
  EXPECT_NEAR(angle_error(e.phi, truth.phi), 0.0, 1e-6);
  EXPECT_GE(e.phi, 0.0);
  EXPECT_LT(e.phi, kPi);
}

TEST(Ellipse, RandomNoiselessRecovery) {
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const double a = rng.uniform(4.0, 40.0);
    const EllipseParams truth{rng.uniform(-50, 50), rng.uniform(-50, 50), a,
                              a * rng.uniform(0.3, 1.0), rng.uniform(0.0, kPi)};
    const EllipseParams e = fit_ellipse(ellipse_points(truth, 32, rng.uniform()));
    EXPECT_NEAR(e.cx, truth.cx, 1e-6);
    EXPECT_NEAR(e.cy, truth.cy, 1e-6);
    EXPECT_NEAR(e.a, truth.a, 1e-6);
    EXPECT_NEAR(e.b, truth.b, 1e-6);
    if (truth.b < 0.99 * truth.a) {
      EXPECT_LT(angle_error(e.phi, truth.phi), 1e-6);
    }
  }
}

TEST(Ellipse, TooFewPoints) {
  const auto pts = ellipse_points({0, 0, 3, 2, 0}, 5);
  EXPECT_THROW(fit_ellipse(pts), std::invalid_argument);
}

TEST(Ellipse, DegenerateSets) {
  std::vector<Point2> line;
  for (int i = 0; i < 10; ++i) line.push_back({double(i), 2.0 * i + 1.0});
  EXPECT_THROW(fit_ellipse(line), NumericError);
  const std::vector<Point2> same(8, Point2{1.0, 1.0});
  EXPECT_THROW(fit_ellipse(same), NumericError);
}

TEST(Ellipse, HyperbolicSamplesYieldValidEllipseOrError) {
  // The constraint forces an elliptic conic; pathological input must either
  // produce a valid ellipse or raise, never return garbage.
  std::vector<Point2> pts;
  for (double t : {-1.5, -1.0, -0.5, 0.5, 1.0, 1.5}) {
    pts.push_back({std::cosh(t), std::sinh(t)});
    pts.push_back({-std::cosh(t), std::sinh(t)});
  }
  try {
    const EllipseParams e = fit_ellipse(pts);
    EXPECT_TRUE(std::isfinite(e.a) && std::isfinite(e.b));
    EXPECT_GE(e.a, e.b);
    EXPECT_GT(e.b, 0.0);
  } catch (const NumericError&) {
  }
}

TEST(Ellipse, PermutationAndRigidMotionInvariance) {
  Rng rng(6);
  for (int i = 0; i < 20; ++i) {
    const EllipseParams truth{rng.uniform(-5, 5), rng.uniform(-5, 5), 12.0,
                              rng.uniform(3.0, 10.0), rng.uniform(0, kPi)};
    auto pts = ellipse_points(truth, 40);
    for (auto& p : pts) {  // small perturbation so the fit is not exact
      p.x += 0.05 * rng.normal();
      p.y += 0.05 * rng.normal();
    }
    const EllipseParams base = fit_ellipse(pts);
    auto shuffled = pts;
    rng.shuffle(shuffled.begin(), shuffled.end());
    const EllipseParams perm = fit_ellipse(shuffled);
    EXPECT_NEAR(perm.a, base.a, 1e-9);
    EXPECT_NEAR(perm.b, base.b, 1e-9);
    EXPECT_NEAR(perm.cx, base.cx, 1e-9);
    EXPECT_NEAR(angle_error(perm.phi, base.phi), 0.0, 1e-9);

    const double rot = rng.uniform(0, 2 * kPi), tx = rng.uniform(-20, 20),
                 ty = rng.uniform(-20, 20);
    const double c = std::cos(rot), s = std::sin(rot);
    std::vector<Point2> moved;
    for (const auto& p : pts) moved.push_back({c * p.x - s * p.y + tx, s * p.x + c * p.y + ty});
    const EllipseParams m = fit_ellipse(moved);
    EXPECT_NEAR(m.a, base.a, 1e-9);
    EXPECT_NEAR(m.b, base.b, 1e-9);
    EXPECT_NEAR(m.cx, c * base.cx - s * base.cy + tx, 1e-9);
    EXPECT_NEAR(m.cy, s * base.cx + c * base.cy + ty, 1e-9);
    EXPECT_NEAR(angle_error(m.phi, base.phi + rot), 0.0, 1e-9);
  }
}

TEST(Tilt, StraightVesselIsUntilted) {
  const std::vector<Point2> c(5, Point2{3.0, 4.0});
  const std::vector<std::size_t> idx = {0, 1, 2, 3, 4};
  for (double t : estimate_tilt(c, idx, 2.5)) EXPECT_EQ(t, 0.0);
}

TEST(Tilt, ThreeFourFive) {
  std::vector<Point2> c;
  std::vector<std::size_t> idx;
  for (std::size_t z = 0; z < 6; ++z) {
    c.push_back({1.8 * z, 2.4 * z});  // 3 mm of drift per slice
    idx.push_back(z);
  }
  for (double t : estimate_tilt(c, idx, 4.0)) EXPECT_NEAR(t, std::atan(0.75), 1e-12);
}

TEST(Tilt, ClampedAtSixtyDegrees) {
  const double drift = std::tan(75.0 * kPi / 180.0);
  const std::vector<Point2> c = {{0, 0}, {drift, 0}, {2 * drift, 0}};
  const std::vector<std::size_t> idx = {0, 1, 2};
  for (double t : estimate_tilt(c, idx, 1.0)) EXPECT_DOUBLE_EQ(t, kMaxTiltRadians);
}

TEST(Tilt, IsolatedSlicesAndRuns) {
  // Slices 0-2 drift, slice 5 is alone, 7-8 form a two-slice run.
  const std::vector<Point2> c = {{0, 0}, {1, 0}, {3, 0}, {9, 9}, {0, 0}, {2, 0}};
  const std::vector<std::size_t> idx = {0, 1, 2, 5, 7, 8};
  const auto t = estimate_tilt(c, idx, 2.0);
  ASSERT_EQ(t.size(), 6u);
  EXPECT_NEAR(t[0], std::atan(0.5), 1e-12);   // one-sided
  EXPECT_NEAR(t[1], std::atan(0.75), 1e-12);  // centered: 3 mm over 4 mm
  EXPECT_NEAR(t[2], std::atan(1.0), 1e-12);   // one-sided
  EXPECT_EQ(t[3], 0.0);
  EXPECT_NEAR(t[4], std::atan(1.0), 1e-12);
  EXPECT_NEAR(t[5], std::atan(1.0), 1e-12);
}

TEST(CorrectedDiameter, Examples) {
  EXPECT_EQ(corrected_diameter(40, 0), 40.0);
  EXPECT_NEAR(corrected_diameter(40, kPi / 3), 20.0, 1e-12);
  EXPECT_NEAR(corrected_diameter(50, std::atan(0.75)), 40.0, 1e-12);
  double prev = corrected_diameter(30, 0);
  for (int i = 1; i < 90; ++i) {
    const double d = corrected_diameter(30, i * kPi / 180.0);
    EXPECT_LT(d, prev);
    prev = d;
  }
}

TEST(Measure, EmptyMask) {
  const StudyMeasurement m = measure_study(MaskVolume({10, 10, 4}, {1, 1, 1}));
  EXPECT_TRUE(m.slices.empty());
  EXPECT_FALSE(m.max_diameter_mm);
  EXPECT_FALSE(m.max_slice);
}

TEST(Measure, VerticalCylinder) {
  const Spacing s{0.8, 0.8, 3.0};
  const StudyMeasurement m = measure_study(cylinder({64, 64, 8}, s, 15.0, 0.0));
  ASSERT_EQ(m.slices.size(), 8u);
  for (const auto& sl : m.slices) {
    EXPECT_NEAR(sl.raw_diameter_mm, 30.0, 0.5 * s.x);
    EXPECT_EQ(sl.tilt_theta, 0.0);
    EXPECT_EQ(sl.corrected_diameter_mm, sl.raw_diameter_mm);
    EXPECT_GT(sl.contour_points, 6u);
  }
  ASSERT_TRUE(m.max_diameter_mm);
  EXPECT_NEAR(*m.max_diameter_mm, 30.0, 0.5 * s.x);
}

TEST(Measure, TiltedCylinder) {
  const double r = 10.0, tilt = 30.0 * kPi / 180.0;
  const StudyMeasurement m = measure_study(cylinder({96, 64, 24}, {0.6, 0.6, 1.5}, r, tilt));
  ASSERT_FALSE(m.slices.empty());
  for (const auto& sl : m.slices) {
    EXPECT_NEAR(sl.raw_diameter_mm, 2 * r / std::cos(tilt), 0.05 * 2 * r / std::cos(tilt));
    EXPECT_NEAR(sl.corrected_diameter_mm, 2 * r, 0.05 * 2 * r);
    EXPECT_LE(sl.corrected_diameter_mm, sl.raw_diameter_mm);
    EXPECT_GE(sl.tilt_theta, 0.0);
    EXPECT_LT(sl.tilt_theta, kPi / 2);
  }
}

TEST(Measure, CorrectionBeatsRawAcrossTilts) {
  const double r = 8.0;
  for (double deg : {12.0, 20.0, 30.0, 40.0, 44.0}) {
    const double tilt = deg * kPi / 180.0;
    const StudyMeasurement m =
        measure_study(cylinder({112, 64, 20}, {0.5, 0.5, 1.0}, r, tilt));
    ASSERT_TRUE(m.max_diameter_mm);
    const auto& sl = m.slices[m.slices.size() / 2];
    EXPECT_LT(std::abs(sl.corrected_diameter_mm - 2 * r),
              std::abs(sl.raw_diameter_mm - 2 * r))
        << deg;
    EXPECT_GT(*m.max_diameter_mm, 0.0);
  }
}

TEST(Measure, SkipsUnfittableSlices) {
  MaskVolume m({10, 10, 3}, {1, 1, 1});
  m.at(5, 5, 1) = 1;  // single voxel, too few contour points
  const StudyMeasurement r = measure_study(m);
  EXPECT_TRUE(r.slices.empty());
  EXPECT_FALSE(r.max_diameter_mm);
}

}  // namespace
}  // namespace aaa
