#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "aaa/volume.hpp"

namespace aaa {

struct Point2 {
  double x = 0.0, y = 0.0;
  bool operator==(const Point2&) const = default;
};

// Ellipse in slice-plane millimetres. a >= b > 0; phi is the direction of
// the major axis in [0, pi).
struct EllipseParams {
  double cx = 0.0, cy = 0.0;
  double a = 0.0, b = 0.0;
  double phi = 0.0;
};

struct SliceMeasurement {
  std::size_t z = 0;
  double raw_diameter_mm = 0.0;        // 2a
  double tilt_theta = 0.0;             // radians, [0, pi/2)
  double corrected_diameter_mm = 0.0;  // raw * cos(theta)
  Point2 centroid;                     // ellipse center, mm
  std::size_t contour_points = 0;
  EllipseParams ellipse;
};

struct StudyMeasurement {
  std::vector<SliceMeasurement> slices;
  std::optional<double> max_diameter_mm;  // over corrected diameters
  std::optional<std::size_t> max_slice;
};

// Largest 4-connected foreground component of a slice (x-fastest, nx * ny),
// as a mask of the same size. Ties go to the component found first in
// scan order. Returns the component's voxel count (0 for an empty slice).
std::size_t largest_component(std::span<const std::uint8_t> slice,
                              std::size_t nx, std::size_t ny,
                              std::vector<std::uint8_t>& out);

// Closed, counter-clockwise 0.5-level boundary of the largest component,
// in mm with voxel (0, 0) at the origin. The first point is not repeated.
// Returns nullopt when the slice is empty or the boundary has < 6 points.
std::optional<std::vector<Point2>> extract_slice_contour(
    std::span<const std::uint8_t> slice, std::size_t nx, std::size_t ny,
    double sx, double sy);

// Signed shoelace area (positive for counter-clockwise).
double polygon_area(std::span<const Point2> polygon);

// Direct least-squares ellipse fit under the constraint 4AC - B^2 = 1,
// using the partitioned scatter-matrix eigenproblem. Throws
// std::invalid_argument for fewer than 6 points and NumericError for
// degenerate sets or a non-elliptic best conic.
EllipseParams fit_ellipse(std::span<const Point2> points);

// Per-slice angle between the vessel axis and the slice normal, from
// 3-slice centered differences of centroids (one-sided at run ends).
// Slices without a measured neighbour get 0. Clamped to [0, max_theta].
inline constexpr double kMaxTiltRadians = 1.0471975511965976;  // 60 degrees
std::vector<double> estimate_tilt(std::span<const Point2> centroids,
                                  std::span<const std::size_t> slice_indices,
                                  double sz_mm,
                                  double max_theta = kMaxTiltRadians);

inline double corrected_diameter(double d_mm, double theta) {
  return d_mm * std::cos(theta);
}

// Slice-wise ellipse measurement of a binary mask; the study maximum is
// taken over angle-corrected diameters.
StudyMeasurement measure_study(const MaskVolume& mask);

}  // namespace aaa
