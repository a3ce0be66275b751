#include "aaa/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <cstdio>
#include <numeric>
#include <utility>

#include "aaa/error.hpp"
#include "aaa/parallel.hpp"
#include "aaa/random.hpp"

namespace aaa {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

struct Axis {
  double px, py, pz;  // point at mid-height
  double ux, uy, uz;  // unit direction
};

Axis tube_axis(const PhantomSpec& s) {
  const double t = s.tilt_deg * kDeg, a = s.tilt_azimuth_deg * kDeg;
  return {0.5 * static_cast<double>(s.dims.x - 1) * s.spacing.x,
          0.5 * static_cast<double>(s.dims.y - 1) * s.spacing.y,
          0.5 * static_cast<double>(s.dims.z - 1) * s.spacing.z,
          std::sin(t) * std::cos(a),
          std::sin(t) * std::sin(a),
          std::cos(t)};
}

double max_radius(const PhantomSpec& s) {
  return s.base_radius_mm + (s.aneurysm ? s.aneurysm->amplitude_mm : 0.0);
}

// In-plane half extent of the tube cross-section bounding box plus the
// axis offset at the extreme slices must stay one voxel inside the volume.
bool fits(const PhantomSpec& s) {
  const double t = s.tilt_deg * kDeg;
  const double reach = max_radius(s) / std::cos(t);
  const double half_z = 0.5 * static_cast<double>(s.dims.z - 1) * s.spacing.z;
  const double drift = half_z * std::tan(t);
  const double a = s.tilt_azimuth_deg * kDeg;
  const double need_x = reach + drift * std::abs(std::cos(a));
  const double need_y = reach + drift * std::abs(std::sin(a));
  const double room_x = 0.5 * static_cast<double>(s.dims.x - 1) * s.spacing.x -
                        s.spacing.x;
  const double room_y = 0.5 * static_cast<double>(s.dims.y - 1) * s.spacing.y -
                        s.spacing.y;
  return need_x <= room_x && need_y <= room_y;
}

}  // namespace

double analytic_max_diameter(const PhantomSpec& spec) {
  return 2.0 * max_radius(spec);
}

double tube_radius(const PhantomSpec& spec, double s) {
  double r = spec.base_radius_mm;
  if (spec.aneurysm) {
    const Axis ax = tube_axis(spec);
    const double s0 = (spec.aneurysm->center_z_mm - ax.pz) / ax.uz;
    const double w = spec.aneurysm->width_mm;
    r += spec.aneurysm->amplitude_mm *
         std::exp(-(s - s0) * (s - s0) / (2.0 * w * w));
  }
  return r;
}

namespace {

// Squared distance to the axis and the tube radius at the foot point.
std::pair<double, double> axial_position(const PhantomSpec& spec, std::size_t x,
                                         std::size_t y, std::size_t z) {
  const Axis ax = tube_axis(spec);
  const double dx = static_cast<double>(x) * spec.spacing.x - ax.px;
  const double dy = static_cast<double>(y) * spec.spacing.y - ax.py;
  const double dz = static_cast<double>(z) * spec.spacing.z - ax.pz;
  const double s = dx * ax.ux + dy * ax.uy + dz * ax.uz;
  const double ex = dx - s * ax.ux, ey = dy - s * ax.uy, ez = dz - s * ax.uz;
  return {ex * ex + ey * ey + ez * ez, tube_radius(spec, s)};
}

}  // namespace

double wall_distance(const PhantomSpec& spec, std::size_t x, std::size_t y,
                     std::size_t z) {
  const auto [d2, r] = axial_position(spec, x, y, z);
  return std::sqrt(d2) - r;
}

bool inside_tube(const PhantomSpec& spec, std::size_t x, std::size_t y,
                 std::size_t z) {
  const auto [d2, r] = axial_position(spec, x, y, z);
  return d2 <= r * r;
}

bool inside_body(const PhantomSpec& spec, std::size_t x, std::size_t y) {
  if (spec.body_fraction <= 0.0) return true;
  const double hx = 0.5 * static_cast<double>(spec.dims.x - 1);
  const double hy = 0.5 * static_cast<double>(spec.dims.y - 1);
  const double u = (static_cast<double>(x) - hx) / (spec.body_fraction * (hx + 0.5));
  const double v = (static_cast<double>(y) - hy) / (spec.body_fraction * (hy + 0.5));
  return u * u + v * v <= 1.0;
}

void validate(const PhantomSpec& s) {
  if (s.dims.x < 4 || s.dims.y < 4 || s.dims.z < 1)
    throw DataError("phantom " + s.study_id + ": dims too small");
  if (!s.spacing.valid())
    throw DataError("phantom " + s.study_id + ": spacing must be positive");
  if (!(s.base_radius_mm > 0.0))
    throw DataError("phantom " + s.study_id + ": base radius must be positive");
  if (s.aneurysm && (!(s.aneurysm->amplitude_mm >= 0.0) ||
                     !(s.aneurysm->width_mm > 0.0)))
    throw DataError("phantom " + s.study_id +
                    ": aneurysm amplitude must be >= 0 and width > 0");
  if (!(s.tilt_deg >= 0.0 && s.tilt_deg < 80.0))
    throw DataError("phantom " + s.study_id + ": tilt must lie in [0, 80)");
  if (!(s.body_fraction >= 0.0 && s.body_fraction <= 1.0))
    throw DataError("phantom " + s.study_id + ": body fraction must lie in [0, 1]");
  if (!(s.fat_sleeve_mm >= 0.0))
    throw DataError("phantom " + s.study_id + ": fat sleeve must be >= 0");
  if (!(s.noise_sigma >= 0.0))
    throw DataError("phantom " + s.study_id + ": noise sigma must be >= 0");
  if (!fits(s))
    throw DataError("phantom " + s.study_id + ": tube exits the volume");
}

PhantomStudy generate(const PhantomSpec& spec) {
  validate(spec);
  PhantomStudy st;
  st.spec = spec;
  st.analytic_max_diameter_mm = analytic_max_diameter(spec);
  st.reference_aaa = classify_aaa(st.analytic_max_diameter_mm).positive;
  st.truth_mask = MaskVolume(spec.dims, spec.spacing, 0);
  st.volume = StudyVolume(spec.dims, spec.spacing, 0.0f);
  const double lumen = spec.contrast == CtType::kContrast ? kContrastLumen
                                                          : kNonContrastLumen;
  Rng rng(spec.seed);
  for (std::size_t z = 0; z < spec.dims.z; ++z)
    for (std::size_t y = 0; y < spec.dims.y; ++y)
      for (std::size_t x = 0; x < spec.dims.x; ++x) {
        const auto [d2, r] = axial_position(spec, x, y, z);
        const bool in = d2 <= r * r;
        const double sleeve = r + spec.fat_sleeve_mm;
        st.truth_mask.at(x, y, z) = in ? 1 : 0;
        const double noise =
            spec.noise_sigma > 0.0 ? spec.noise_sigma * rng.normal() : 0.0;
        const double base = in                    ? lumen
                            : d2 <= sleeve * sleeve ? kFat
                            : inside_body(spec, x, y) ? kSoftTissue
                                                      : kExterior;
        st.volume.at(x, y, z) = static_cast<float>(base + noise);
      }
  return st;
}

std::vector<PhantomSpec> corpus_specs(std::size_t n, const CorpusOptions& o,
                                      std::uint64_t seed) {
  std::vector<PhantomSpec> specs(n);
  if (n == 0) return specs;
  Rng global(seed);

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  global.shuffle(perm.begin(), perm.end());
  const auto n_pos = static_cast<std::size_t>(
      std::llround(o.positive_fraction * static_cast<double>(n)));
  std::vector<bool> positive(n, false);
  for (std::size_t i = 0; i < n_pos; ++i) positive[perm[i]] = true;

  global.shuffle(perm.begin(), perm.end());
  const auto n_con = static_cast<std::size_t>(
      std::llround(o.contrast_fraction * static_cast<double>(n)));
  std::vector<bool> contrast(n, false);
  for (std::size_t i = 0; i < n_con; ++i) contrast[perm[i]] = true;

  // Stratified slice spacings so the corpus spans the whole range.
  global.shuffle(perm.begin(), perm.end());
  std::vector<double> sz(n);
  for (std::size_t i = 0; i < n; ++i)
    sz[i] = o.z_spacing_min + (o.z_spacing_max - o.z_spacing_min) *
                                  (static_cast<double>(perm[i]) + global.uniform()) /
                                  static_cast<double>(n);

  // A patient owns at most two consecutive studies.
  std::size_t patient = 0;
  bool can_pair = false;
  for (std::size_t i = 0; i < n; ++i) {
    const bool pair = can_pair && global.uniform() < o.paired_fraction;
    can_pair = !pair;
    if (!pair) ++patient;
    char pid[24], sid[24];
    std::snprintf(pid, sizeof pid, "P%04zu", patient);
    std::snprintf(sid, sizeof sid, "S%04zu", i + 1);

    Rng rng(mix_seed(seed, i));
    PhantomSpec& s = specs[i];
    s.study_id = sid;
    s.patient_id = pid;
    s.dims = o.dims;
    const double sxy =
        rng.uniform(o.inplane_spacing_min, o.inplane_spacing_max);
    s.spacing = {sxy, sxy, sz[i]};
    s.contrast = contrast[i] ? CtType::kContrast : CtType::kNonContrast;
    s.noise_sigma = o.noise_sigma;
    s.seed = mix_seed(seed ^ 0xa5a5a5a5ULL, i);

    const double d = positive[i] ? rng.uniform(o.positive_diameter_min,
                                               o.positive_diameter_max)
                                 : rng.uniform(o.negative_diameter_min,
                                               o.negative_diameter_max);
    double r0 = positive[i] ? std::min(rng.uniform(9.0, 12.0), 0.5 * d)
                            : 0.5 * d - rng.uniform(0.0, 3.0);
    r0 = std::max(r0, 0.25 * d);
    s.base_radius_mm = r0;
    const double amp = 0.5 * d - r0;
    if (amp > 0.0) {
      const std::size_t k = s.dims.z / 4 + rng.below(s.dims.z / 2 + 1);
      // Fusiform bulges stay long relative to their height so that oblique
      // slices through the peak still see a near-elliptic section.
      const double w0 = std::max({6.0, 1.5 * sz[i], 1.5 * amp});
      s.aneurysm = AneurysmSpec{static_cast<double>(k) * sz[i], amp,
                                rng.uniform(w0, w0 + 10.0)};
    }
    s.tilt_azimuth_deg = rng.uniform(0.0, 360.0);

    // Largest admissible tilt by bisection, then a random fraction of it.
    double lo = 0.0, hi = o.max_tilt_deg;
    s.tilt_deg = hi;
    if (!fits(s)) {
      for (int it = 0; it < 60; ++it) {
        s.tilt_deg = 0.5 * (lo + hi);
        (fits(s) ? lo : hi) = s.tilt_deg;
      }
      hi = lo;
    }
    s.tilt_deg = rng.uniform(0.0, hi);
    validate(s);
  }
  return specs;
}

std::vector<PhantomStudy> corpus(std::size_t n, const CorpusOptions& opts,
                                 std::uint64_t seed, int threads) {
  const auto specs = corpus_specs(n, opts, seed);
  std::vector<PhantomStudy> out(n);
  parallel_for(n, threads, [&](std::size_t i) { out[i] = generate(specs[i]); });
  return out;
}

}  // namespace aaa
