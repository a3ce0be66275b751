#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace aaa {

struct Dims {
  std::size_t x = 0, y = 0, z = 0;
  std::size_t count() const { return x * y * z; }
  std::size_t slice_count() const { return x * y; }
  bool operator==(const Dims&) const = default;
};

// Physical voxel size in millimetres.
struct Spacing {
  double x = 1.0, y = 1.0, z = 1.0;
  bool valid() const { return x > 0.0 && y > 0.0 && z > 0.0; }
  bool operator==(const Spacing&) const = default;
};

// Regular grid stored x-fastest, then y, then z (slice z is contiguous).
template <typename V>
struct Grid {
  Dims dims;
  Spacing spacing;
  std::vector<V> voxels;

  Grid() = default;
  Grid(Dims d, Spacing s, V fill = V{})
      : dims(d), spacing(s), voxels(d.count(), fill) {
    if (!s.valid()) throw std::invalid_argument("spacing must be positive");
  }

  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
    return x + dims.x * (y + dims.y * z);
  }
  V& at(std::size_t x, std::size_t y, std::size_t z) {
    return voxels[index(x, y, z)];
  }
  const V& at(std::size_t x, std::size_t y, std::size_t z) const {
    return voxels[index(x, y, z)];
  }
  const V* slice(std::size_t z) const {
    return voxels.data() + z * dims.slice_count();
  }
  V* slice(std::size_t z) { return voxels.data() + z * dims.slice_count(); }

  bool operator==(const Grid&) const = default;
};

// CT-like intensities.
using StudyVolume = Grid<float>;
// Binary segmentation, values in {0, 1}.
using MaskVolume = Grid<std::uint8_t>;

inline std::size_t foreground_count(const MaskVolume& m) {
  std::size_t n = 0;
  for (auto v : m.voxels) n += v != 0;
  return n;
}

}  // namespace aaa
