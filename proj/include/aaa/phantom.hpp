#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "aaa/detect.hpp"
#include "aaa/volume.hpp"

namespace aaa {

// Gaussian fusiform bulge r(s) = r0 + amplitude * exp(-(s - s0)^2 / 2 w^2),
// with s the position along the tube axis and s0 the axis point at
// physical height center_z_mm.
struct AneurysmSpec {
  double center_z_mm = 0.0;
  double amplitude_mm = 0.0;
  double width_mm = 10.0;
};

struct PhantomSpec {
  std::string study_id = "S0000";
  std::string patient_id = "P0000";
  Dims dims{64, 64, 32};
  Spacing spacing{1.0, 1.0, 2.0};
  double base_radius_mm = 10.0;
  std::optional<AneurysmSpec> aneurysm;
  double tilt_deg = 0.0;          // angle between tube axis and z
  double tilt_azimuth_deg = 0.0;  // in-plane direction of the tilt
  CtType contrast = CtType::kContrast;
  double noise_sigma = 5.0;
  std::uint64_t seed = 0;
  // Body outline: an axis-aligned elliptic cylinder of soft tissue whose
  // diameters are this share of the in-plane extent, surrounded by air.
  // 0 fills the whole volume with soft tissue.
  double body_fraction = 0.94;
  // Periaortic fat: a sleeve of this thickness around the tube wall.
  double fat_sleeve_mm = 3.0;
};

inline constexpr double kContrastLumen = 300.0;
inline constexpr double kNonContrastLumen = 60.0;
inline constexpr double kSoftTissue = 40.0;
inline constexpr double kFat = -100.0;
inline constexpr double kExterior = -180.0;  // air, kept inside the window

struct PhantomStudy {
  PhantomSpec spec;
  StudyVolume volume;
  MaskVolume truth_mask;
  double analytic_max_diameter_mm = 0.0;
  bool reference_aaa = false;
};

// 2 (r0 + A) with a bulge, else 2 r0. Tilt does not enter: the true
// diameter is measured perpendicular to the axis.
double analytic_max_diameter(const PhantomSpec& spec);

// Radius at axial coordinate s, in mm from the axis point at the volume's
// mid-height.
double tube_radius(const PhantomSpec& spec, double s);

// Whether the voxel center (x, y, z) lies inside the body outline.
bool inside_body(const PhantomSpec& spec, std::size_t x, std::size_t y);

// Distance from the voxel center (x, y, z) to the tube wall in mm;
// negative inside the tube.
double wall_distance(const PhantomSpec& spec, std::size_t x, std::size_t y,
                     std::size_t z);

// Whether the voxel center (x, y, z) lies inside the tube.
bool inside_tube(const PhantomSpec& spec, std::size_t x, std::size_t y,
                 std::size_t z);

// Throws DataError when a PhantomSpec is invalid or the tube leaves the volume.
void validate(const PhantomSpec& spec);

PhantomStudy generate(const PhantomSpec& spec);

struct CorpusOptions {
  double positive_fraction = 0.5;
  double contrast_fraction = 0.5;
  double paired_fraction = 0.2;  // share of studies reusing the previous patient
  Dims dims{64, 64, 32};
  double inplane_spacing_min = 1.2, inplane_spacing_max = 1.5;
  double z_spacing_min = 2.0, z_spacing_max = 10.0;
  double max_tilt_deg = 25.0;
  // Analytic diameters are drawn from these ranges.
  double positive_diameter_min = 36.0, positive_diameter_max = 46.0;
  double negative_diameter_min = 16.0, negative_diameter_max = 24.0;
  double noise_sigma = 5.0;
};

// Deterministic corpus of n studies; exactly round(n * positive_fraction)
// are positive.
std::vector<PhantomSpec> corpus_specs(std::size_t n, const CorpusOptions& opts,
                                      std::uint64_t seed);

std::vector<PhantomStudy> corpus(std::size_t n, const CorpusOptions& opts,
                                 std::uint64_t seed, int threads = 1);

}  // namespace aaa
