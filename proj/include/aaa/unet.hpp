#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "aaa/layers.hpp"
#include "aaa/tensor.hpp"
#include "aaa/volume.hpp"

namespace aaa {

struct UNetConfig {
  int levels = 4;
  int init_features = 32;
  int convs_per_block = 2;
  int growth_factor = 2;
  int classes = 2;
  double bottleneck_dropout = 0.2;
  BatchNormOptions batchnorm;
  // Intensity window applied before the network; values are clamped and
  // mapped linearly onto [0, 1].
  double clamp_lo = -200.0;
  double clamp_hi = 500.0;

  // Throws std::invalid_argument describing the first violated constraint.
  void validate() const;
  std::size_t features(int level) const;
  std::size_t grid_multiple() const { return std::size_t{1} << levels; }
};

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> value;
  bool operator==(const NamedTensor&) const = default;
};

// Trainable parameters, batch-norm running statistics and optimizer slots,
// each an ordered list of uniquely named tensors.
template <typename T>
class WeightStore {
 public:
  enum class Section { kParams, kBuffers, kOptimizer };

  void add(Section section, std::string name, Tensor<T> value);

  std::vector<NamedTensor<T>>& entries(Section s);
  const std::vector<NamedTensor<T>>& entries(Section s) const;
  std::vector<NamedTensor<T>>& params() { return entries(Section::kParams); }
  const std::vector<NamedTensor<T>>& params() const {
    return entries(Section::kParams);
  }
  std::vector<NamedTensor<T>>& buffers() { return entries(Section::kBuffers); }
  const std::vector<NamedTensor<T>>& buffers() const {
    return entries(Section::kBuffers);
  }

  Tensor<T>& get(Section s, const std::string& name);
  const Tensor<T>& get(Section s, const std::string& name) const;
  Tensor<T>& param(const std::string& name) { return get(Section::kParams, name); }
  const Tensor<T>& param(const std::string& name) const {
    return get(Section::kParams, name);
  }
  bool contains(Section s, const std::string& name) const;
  std::size_t param_index(const std::string& name) const;

  std::size_t parameter_count() const;
  void clear(Section s);

  template <typename U>
  WeightStore<U> cast() const;

  bool operator==(const WeightStore& other) const {
    return sections_ == other.sections_;
  }

 private:
  std::array<std::vector<NamedTensor<T>>, 3> sections_;
  std::array<std::unordered_map<std::string, std::size_t>, 3> index_;
};

// He-initialized kernels (scale sqrt(2 / fan_in)), zero biases, unit gamma,
// zero beta, running mean 0 and variance 1.
template <typename T>
WeightStore<T> build(const UNetConfig& config, std::uint64_t seed);

// Cached activations of a train-mode forward pass.
template <typename T>
struct UnitTape {
  Tensor<T> input;
  BatchNormCache<T> bn;
  Tensor<T> pre_relu;
};

template <typename T>
struct ForwardTape {
  std::vector<std::vector<UnitTape<T>>> encoder;
  std::vector<PoolResult<T>> pools;
  std::vector<UnitTape<T>> bottleneck;
  DropoutResult<T> drop;
  std::vector<Tensor<T>> up_inputs;  // indexed by level
  std::vector<std::vector<UnitTape<T>>> decoder;
  Tensor<T> head_input;
  Tensor<T> probabilities;
};

// Probability map [N, 2, X, Y, Z]. Train mode updates the running
// statistics held in `weights` and applies bottleneck dropout from `seed`.
// X and Y must be multiples of 2^levels (see pad_to_grid).
template <typename T>
Tensor<T> forward(WeightStore<T>& weights, const UNetConfig& config,
                  const Tensor<T>& volume, Mode mode, std::uint64_t seed,
                  ForwardTape<T>* tape = nullptr);

// Inference-mode forward over read-only weights.
template <typename T>
Tensor<T> infer(const WeightStore<T>& weights, const UNetConfig& config,
                const Tensor<T>& volume);

// Parameter gradients (aligned with weights.params()) given the gradient of
// a loss with respect to the probability map of the taped forward pass.
template <typename T>
std::vector<Tensor<T>> backward(const WeightStore<T>& weights,
                                const UNetConfig& config,
                                const ForwardTape<T>& tape,
                                const Tensor<T>& grad_probabilities);

// Clamp to the config window and scale to [0, 1]; returns [1, 1, X, Y, Z].
// Non-finite intensities are rejected with std::invalid_argument.
Tensor<float> normalize_intensities(const StudyVolume& volume,
                                    const UNetConfig& config);

// A voxel is aorta iff its aorta-channel (index 1) probability is strictly
// greater than the threshold. The probability map must have N == 1.
template <typename T>
MaskVolume binarize(const Tensor<T>& probabilities, double threshold = 0.5,
                    Spacing spacing = {});

struct CropRecord {
  std::size_t x_lo = 0, x_hi = 0, y_lo = 0, y_hi = 0;
  bool empty() const { return x_lo + x_hi + y_lo + y_hi == 0; }
  bool operator==(const CropRecord&) const = default;
};

template <typename V>
struct Padded {
  Grid<V> grid;
  CropRecord crop;
};

// Zero-pads x and y symmetrically (extra voxel on the high side) up to the
// next multiple of 2^levels; z is untouched.
template <typename V>
Padded<V> pad_to_grid(const Grid<V>& volume, int levels);

template <typename V>
Grid<V> unpad(const Grid<V>& padded, const CropRecord& crop);

}  // namespace aaa
