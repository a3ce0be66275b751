#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "aaa/geometry.hpp"

namespace aaa {

std::size_t largest_component(std::span<const std::uint8_t> slice,
                              std::size_t nx, std::size_t ny,
                              std::vector<std::uint8_t>& out) {
  out.assign(nx * ny, 0);
  std::vector<std::int32_t> label(nx * ny, -1);
  std::vector<std::size_t> stack;
  std::size_t best_size = 0;
  std::int32_t best_label = -1, next_label = 0;
  for (std::size_t start = 0; start < nx * ny; ++start) {
    if (!slice[start] || label[start] >= 0) continue;
    const std::int32_t id = next_label++;
    std::size_t size = 0;
    stack.assign(1, start);
    label[start] = id;
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      ++size;
      const std::size_t x = p % nx, y = p / nx;
      auto visit = [&](std::size_t q) {
        if (slice[q] && label[q] < 0) {
          label[q] = id;
          stack.push_back(q);
        }
      };
      if (x > 0) visit(p - 1);
      if (x + 1 < nx) visit(p + 1);
      if (y > 0) visit(p - nx);
      if (y + 1 < ny) visit(p + nx);
    }
    if (size > best_size) {
      best_size = size;
      best_label = id;
    }
  }
  for (std::size_t i = 0; i < nx * ny; ++i) out[i] = label[i] == best_label;
  return best_size;
}

double polygon_area(std::span<const Point2> poly) {
  double twice = 0.0;
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) {
    const Point2& p = poly[i];
    const Point2& q = poly[(i + 1) % n];
    twice += p.x * q.y - q.x * p.y;
  }
  return 0.5 * twice;
}

namespace {

// Marching squares over a binary grid padded by one background voxel on
// every side. Edge midpoints are identified by integer ids; every crossing
// midpoint of a closed boundary joins exactly two segments.
class BoundaryTracer {
 public:
  BoundaryTracer(const std::vector<std::uint8_t>& comp, std::size_t nx,
                 std::size_t ny)
      : nx_(nx + 2), ny_(ny + 2), grid_(nx_ * ny_, 0) {
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t x = 0; x < nx; ++x)
        grid_[(x + 1) + nx_ * (y + 1)] = comp[x + nx * y];
  }

  std::vector<std::vector<Point2>> loops() {
    for (std::size_t j = 0; j + 1 < ny_; ++j)
      for (std::size_t i = 0; i + 1 < nx_; ++i) add_cell(i, j);
    std::vector<std::vector<Point2>> out;
    std::unordered_map<std::size_t, bool> used;
    for (const auto& [start, nbrs] : adj_) {
      if (used[start]) continue;
      std::vector<Point2> loop;
      std::size_t prev = kNone, cur = start;
      do {
        used[cur] = true;
        loop.push_back(midpoint(cur));
        const auto& n = adj_[cur];
        const std::size_t next = n[0] != prev ? n[0] : n[1];
        prev = cur;
        cur = next;
      } while (cur != start && loop.size() <= adj_.size());
      out.push_back(std::move(loop));
    }
    return out;
  }

 private:
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

  bool at(std::size_t i, std::size_t j) const { return grid_[i + nx_ * j]; }
  std::size_t h_edge(std::size_t i, std::size_t j) const {
    return 2 * (i + nx_ * j);
  }
  std::size_t v_edge(std::size_t i, std::size_t j) const {
    return 2 * (i + nx_ * j) + 1;
  }
  Point2 midpoint(std::size_t id) const {
    const std::size_t cell = id / 2;
    const double i = static_cast<double>(cell % nx_);
    const double j = static_cast<double>(cell / nx_);
    // Shift back to unpadded voxel coordinates.
    return (id % 2 == 0) ? Point2{i + 0.5 - 1.0, j - 1.0}
                         : Point2{i - 1.0, j + 0.5 - 1.0};
  }
  void link(std::size_t a, std::size_t b) {
    adj_[a].push_back(b);
    adj_[b].push_back(a);
  }

  void add_cell(std::size_t i, std::size_t j) {
    const bool bl = at(i, j), br = at(i + 1, j), tr = at(i + 1, j + 1),
               tl = at(i, j + 1);
    const std::size_t bottom = h_edge(i, j), top = h_edge(i, j + 1),
                      left = v_edge(i, j), right = v_edge(i + 1, j);
    // Saddles keep diagonal foreground corners apart (4-connectivity).
    if (bl && tr && !br && !tl) {
      link(bottom, left);
      link(top, right);
      return;
    }
    if (br && tl && !bl && !tr) {
      link(bottom, right);
      link(top, left);
      return;
    }
    std::size_t crossing[4];
    std::size_t n = 0;
    if (bl != br) crossing[n++] = bottom;
    if (br != tr) crossing[n++] = right;
    if (tr != tl) crossing[n++] = top;
    if (tl != bl) crossing[n++] = left;
    if (n == 2) link(crossing[0], crossing[1]);
  }

  std::size_t nx_, ny_;
  std::vector<std::uint8_t> grid_;
  std::unordered_map<std::size_t, std::vector<std::size_t>> adj_;
};

}  // namespace

std::optional<std::vector<Point2>> extract_slice_contour(
    std::span<const std::uint8_t> slice, std::size_t nx, std::size_t ny,
    double sx, double sy) {
  std::vector<std::uint8_t> comp;
  if (largest_component(slice, nx, ny, comp) == 0) return std::nullopt;
  BoundaryTracer tracer(comp, nx, ny);
  auto loops = tracer.loops();
  // The outer boundary encloses the largest area; the rest are holes.
  std::vector<Point2>* outer = nullptr;
  double best = -1.0;
  for (auto& l : loops) {
    const double a = std::abs(polygon_area(l));
    if (a > best) {
      best = a;
      outer = &l;
    }
  }
  if (!outer || outer->size() < 6) return std::nullopt;
  std::vector<Point2> pts = std::move(*outer);
  // Deterministic start: lowest y, then lowest x.
  auto first = std::min_element(pts.begin(), pts.end(), [](auto& p, auto& q) {
    return p.y < q.y || (p.y == q.y && p.x < q.x);
  });
  std::rotate(pts.begin(), first, pts.end());
  if (polygon_area(pts) < 0.0) std::reverse(pts.begin() + 1, pts.end());
  for (auto& p : pts) {
    p.x *= sx;
    p.y *= sy;
  }
  return pts;
}

}  // namespace aaa
