#pragma once

// Shared oracles for the test suites: random tensors, central finite
// differences and a brute-force convolution.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "aaa/geometry.hpp"
#include "aaa/random.hpp"
#include "aaa/tensor.hpp"
#include "aaa/volume.hpp"

namespace aaa::test {

inline TensorD random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  TensorD t(std::move(shape));
  for (auto& v : t.values()) v = scale * rng.normal();
  return t;
}

inline double dot(const TensorD& a, const TensorD& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// ||a - b|| / max(||a||, ||b||), or the absolute norm when both are tiny.
inline double relative_error(const TensorD& a, const TensorD& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
  return std::sqrt(diff) / denom;
}

// Central-difference gradient of loss() with respect to every element of x.
template <typename F>
TensorD numeric_gradient(TensorD& x, F&& loss, double eps = 1e-4) {
  TensorD g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + eps;
    const double up = loss();
    x[i] = saved - eps;
    const double down = loss();
    x[i] = saved;
    g[i] = (up - down) / (2.0 * eps);
  }
  return g;
}

// Direct evaluation of a same-padded 3x3x3 (or 1x1x1) convolution.
inline TensorD naive_conv(const TensorD& in, const TensorD& k, const TensorD& b) {
  const std::size_t n = in.dim(0), ci = in.dim(1), X = in.dim(2), Y = in.dim(3),
                    Z = in.dim(4), co = k.dim(0), ks = k.dim(2);
  const long r = static_cast<long>(ks / 2);
  TensorD out({n, co, X, Y, Z});
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t x = 0; x < X; ++x)
        for (std::size_t y = 0; y < Y; ++y)
          for (std::size_t z = 0; z < Z; ++z) {
            double acc = b[o];
            for (std::size_t c = 0; c < ci; ++c)
              for (long dx = -r; dx <= r; ++dx)
                for (long dy = -r; dy <= r; ++dy)
                  for (long dz = -r; dz <= r; ++dz) {
                    const long xx = long(x) + dx, yy = long(y) + dy,
                               zz = long(z) + dz;
                    if (xx < 0 || yy < 0 || zz < 0 || xx >= long(X) ||
                        yy >= long(Y) || zz >= long(Z))
                      continue;
                    acc += k.at(o, c, dx + r, dy + r, dz + r) *
                           in.at(s, c, xx, yy, zz);
                  }
            out.at(s, o, x, y, z) = acc;
          }
  return out;
}

// n points at equal parameter steps on an ellipse, starting at t0.
inline std::vector<Point2> ellipse_points(const EllipseParams& e, int n,
                                          double t0 = 0.0) {
  std::vector<Point2> pts;
  const double c = std::cos(e.phi), s = std::sin(e.phi);
  for (int i = 0; i < n; ++i) {
    const double t = t0 + 2.0 * std::numbers::pi * i / n;
    const double u = e.a * std::cos(t), v = e.b * std::sin(t);
    pts.push_back({e.cx + u * c - v * s, e.cy + u * s + v * c});
  }
  return pts;
}

// Voxelized cylinder of radius r (mm) whose axis passes through the volume
// center with polar angle tilt and azimuth 0.
inline MaskVolume cylinder(Dims d, Spacing s, double r, double tilt) {
  MaskVolume m(d, s);
  const double px = 0.5 * (d.x - 1) * s.x, py = 0.5 * (d.y - 1) * s.y,
               pz = 0.5 * (d.z - 1) * s.z;
  const double ux = std::sin(tilt), uz = std::cos(tilt);
  for (std::size_t z = 0; z < d.z; ++z)
    for (std::size_t y = 0; y < d.y; ++y)
      for (std::size_t x = 0; x < d.x; ++x) {
        const double dx = x * s.x - px, dy = y * s.y - py, dz = z * s.z - pz;
        const double along = dx * ux + dz * uz;
        const double ex = dx - along * ux, ez = dz - along * uz;
        m.at(x, y, z) = ex * ex + dy * dy + ez * ez <= r * r;
      }
  return m;
}

// Scratch directory unique to the calling test, emptied on creation.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("aaa_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace aaa::test
