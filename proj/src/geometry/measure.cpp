#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "aaa/error.hpp"
#include "aaa/geometry.hpp"

namespace aaa {

std::vector<double> estimate_tilt(std::span<const Point2> centroids,
                                  std::span<const std::size_t> slice_indices,
                                  double sz_mm, double max_theta) {
  if (centroids.size() != slice_indices.size())
    throw std::invalid_argument("estimate_tilt: centroid/index count mismatch");
  if (!(sz_mm > 0.0))
    throw std::invalid_argument("estimate_tilt: slice spacing must be positive");
  const std::size_t n = centroids.size();
  std::vector<double> theta(n, 0.0);
  auto angle = [&](std::size_t lo, std::size_t hi) {
    const double dx = centroids[hi].x - centroids[lo].x;
    const double dy = centroids[hi].y - centroids[lo].y;
    const double dz =
        static_cast<double>(slice_indices[hi] - slice_indices[lo]) * sz_mm;
    return std::min(std::atan2(std::hypot(dx, dy), dz), max_theta);
  };
  auto adjacent = [&](std::size_t i, std::size_t j) {
    return slice_indices[j] == slice_indices[i] + 1;
  };
  for (std::size_t i = 0; i < n; ++i) {
    const bool has_prev = i > 0 && adjacent(i - 1, i);
    const bool has_next = i + 1 < n && adjacent(i, i + 1);
    if (has_prev && has_next)
      theta[i] = angle(i - 1, i + 1);
    else if (has_next)
      theta[i] = angle(i, i + 1);
    else if (has_prev)
      theta[i] = angle(i - 1, i);
  }
  return theta;
}

StudyMeasurement measure_study(const MaskVolume& mask) {
  if (!mask.spacing.valid())
    throw std::invalid_argument("mask spacing must be positive");
  if (mask.voxels.size() != mask.dims.count())
    throw std::invalid_argument("mask voxel count does not match dims");
  const std::size_t nx = mask.dims.x, ny = mask.dims.y;
  StudyMeasurement out;
  std::vector<Point2> centers;
  std::vector<std::size_t> indices;
  for (std::size_t z = 0; z < mask.dims.z; ++z) {
    std::span<const std::uint8_t> slice(mask.slice(z), nx * ny);
    auto contour =
        extract_slice_contour(slice, nx, ny, mask.spacing.x, mask.spacing.y);
    if (!contour) continue;
    EllipseParams e;
    try {
      e = fit_ellipse(*contour);
    } catch (const NumericError&) {
      continue;
    }
    SliceMeasurement m;
    m.z = z;
    m.raw_diameter_mm = 2.0 * e.a;
    m.centroid = {e.cx, e.cy};
    m.contour_points = contour->size();
    m.ellipse = e;
    out.slices.push_back(m);
    centers.push_back(m.centroid);
    indices.push_back(z);
  }
  const std::vector<double> theta =
      estimate_tilt(centers, indices, mask.spacing.z);
  for (std::size_t i = 0; i < out.slices.size(); ++i) {
    SliceMeasurement& m = out.slices[i];
    m.tilt_theta = theta[i];
    m.corrected_diameter_mm = corrected_diameter(m.raw_diameter_mm, theta[i]);
    if (!out.max_diameter_mm || m.corrected_diameter_mm > *out.max_diameter_mm) {
      out.max_diameter_mm = m.corrected_diameter_mm;
      out.max_slice = m.z;
    }
  }
  return out;
}

}  // namespace aaa
