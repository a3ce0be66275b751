#include <algorithm>
#include <cmath>
#include <numbers>

#include "aaa/pipeline.hpp"

namespace aaa {

namespace {

struct Rgb {
  std::uint8_t r, g, b;
};

constexpr Rgb kRed{255, 0, 0};
constexpr Rgb kGreen{0, 255, 0};
constexpr Rgb kYellow{255, 255, 0};

class Canvas {
 public:
  Canvas(std::size_t w, std::size_t h) : w_(w), h_(h), px_(w * h) {}

  Rgb& at(std::size_t x, std::size_t y) { return px_[x + w_ * y]; }

  // Sets the pixel nearest to (x, y), given in pixel units; off-canvas is
  // silently dropped.
  void plot(double x, double y, Rgb c) {
    const long ix = std::lround(x), iy = std::lround(y);
    if (ix < 0 || iy < 0 || ix >= long(w_) || iy >= long(h_)) return;
    at(std::size_t(ix), std::size_t(iy)) = c;
  }

  std::string ppm() const {
    std::string out = "P6\n" + std::to_string(w_) + " " + std::to_string(h_) +
                      "\n255\n";
    out.reserve(out.size() + px_.size() * 3);
    for (const Rgb& p : px_) {
      out.push_back(char(p.r));
      out.push_back(char(p.g));
      out.push_back(char(p.b));
    }
    return out;
  }

 private:
  std::size_t w_, h_;
  std::vector<Rgb> px_;
};

}  // namespace

std::string render_overlay(const StudyVolume& volume, const MaskVolume& mask,
                           const std::vector<SliceMeasurement>& slices,
                           std::size_t z, const OverlayOptions& opt) {
  if (volume.dims != mask.dims)
    throw std::invalid_argument("overlay: volume and mask dims differ");
  if (z >= volume.dims.z)
    throw std::out_of_range("overlay: slice " + std::to_string(z) +
                            " is outside [0, " + std::to_string(volume.dims.z) +
                            ")");
  if (!(opt.window_hi > opt.window_lo))
    throw std::invalid_argument("overlay: empty intensity window");
  const std::size_t nx = volume.dims.x, ny = volume.dims.y;
  Canvas canvas(nx, ny);
  const double alpha = std::clamp(opt.mask_alpha, 0.0, 1.0);
  for (std::size_t y = 0; y < ny; ++y)
    for (std::size_t x = 0; x < nx; ++x) {
      const double v = std::clamp<double>(volume.at(x, y, z), opt.window_lo,
                                          opt.window_hi);
      const double g = 255.0 * (v - opt.window_lo) / (opt.window_hi - opt.window_lo);
      double r = g, gr = g, b = g;
      if (mask.at(x, y, z)) {
        r = (1.0 - alpha) * g + alpha * kRed.r;
        gr = (1.0 - alpha) * g;
        b = (1.0 - alpha) * g;
      }
      canvas.at(x, y) = {std::uint8_t(std::lround(r)),
                         std::uint8_t(std::lround(gr)),
                         std::uint8_t(std::lround(b))};
    }

  const auto it = std::find_if(slices.begin(), slices.end(),
                               [&](const auto& s) { return s.z == z; });
  if (it != slices.end()) {
    const EllipseParams& e = it->ellipse;
    const double sx = volume.spacing.x, sy = volume.spacing.y;
    const double c = std::cos(e.phi), s = std::sin(e.phi);
    // Enough samples that consecutive points are under half a pixel apart.
    const int samples =
        64 + int(std::ceil(4.0 * std::numbers::pi * e.a / std::min(sx, sy)));
    for (int i = 0; i < samples; ++i) {
      const double t = 2.0 * std::numbers::pi * i / samples;
      const double u = e.a * std::cos(t), v = e.b * std::sin(t);
      canvas.plot((e.cx + u * c - v * s) / sx, (e.cy + u * s + v * c) / sy,
                  kGreen);
    }
    for (double sign : {-1.0, 1.0}) {
      const double px = (e.cx + sign * e.a * c) / sx;
      const double py = (e.cy + sign * e.a * s) / sy;
      for (int d = -2; d <= 2; ++d) {
        canvas.plot(px + d, py, kYellow);
        canvas.plot(px, py + d, kYellow);
      }
    }
  }
  return canvas.ppm();
}

}  // namespace aaa
