#pragma once

// Differentiable layer primitives for 5-D activations [N, C, X, Y, Z].
// Every primitive preserves the z extent.

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "aaa/tensor.hpp"

namespace aaa {

enum class Mode { kTrain, kInfer };

template <typename T>
struct LayerGrads {
  Tensor<T> grad_input;
  std::map<std::string, Tensor<T>> grad_params;
};

// Same-padded (zero) convolution, stride 1. Kernel [Cout, Cin, k, k, k]
// with k = 3 for the feature convolutions; k = 1 is accepted for the
// output projection. Bias has shape [Cout].
template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& input, const Tensor<T>& kernel,
                         const Tensor<T>& bias);

// grad_params keys: "kernel", "bias".
template <typename T>
LayerGrads<T> conv3d_backward(const Tensor<T>& input, const Tensor<T>& kernel,
                              const Tensor<T>& grad_output);

struct BatchNormOptions {
  double eps = 1e-5;
  double momentum = 0.9;
};

template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  bool populated() const {
    return !running_mean.empty() && running_mean.size() == running_var.size();
  }
};

template <typename T>
struct BatchNormCache {
  Tensor<T> x_hat;
  std::vector<T> inv_std;
};

template <typename T>
struct BatchNormResult {
  Tensor<T> output;
  BatchNormState<T> state;
  BatchNormCache<T> cache;
};

// Train mode normalizes with batch statistics over (N, X, Y, Z) and folds
// them into the running averages; infer mode uses the running averages.
template <typename T>
BatchNormResult<T> batchnorm_forward(const Tensor<T>& input,
                                     const Tensor<T>& gamma,
                                     const Tensor<T>& beta,
                                     const BatchNormState<T>& state, Mode mode,
                                     const BatchNormOptions& opts = {});

// Backward of the train-mode transform. grad_params keys: "gamma", "beta".
template <typename T>
LayerGrads<T> batchnorm_backward(const BatchNormCache<T>& cache,
                                 const Tensor<T>& gamma,
                                 const Tensor<T>& grad_output);

template <typename T>
Tensor<T> relu(const Tensor<T>& input);

// The subgradient at exactly 0 is taken as 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_output);

template <typename T>
struct PoolResult {
  Tensor<T> output;
  std::vector<std::uint32_t> argmax;  // flat input index per output value
  Shape input_shape;
};

// 2x2x1 max pooling. X and Y must be even.
template <typename T>
PoolResult<T> maxpool_forward(const Tensor<T>& input);

template <typename T>
Tensor<T> maxpool_backward(const PoolResult<T>& record,
                           const Tensor<T>& grad_output);

// Transposed convolution, kernel [Cin, Cout, 2, 2, 1], stride (2, 2, 1).
template <typename T>
Tensor<T> upconv_forward(const Tensor<T>& input, const Tensor<T>& kernel,
                         const Tensor<T>& bias);

template <typename T>
LayerGrads<T> upconv_backward(const Tensor<T>& input, const Tensor<T>& kernel,
                              const Tensor<T>& grad_output);

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

// Inverse of concat_channels for gradients: first `channels_a` channels go
// to the first part.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& grad,
                                               std::size_t channels_a);

template <typename T>
struct DropoutResult {
  Tensor<T> output;
  std::vector<T> scale;  // per-element multiplier; empty means identity
};

// Inverted dropout; identity in infer mode or when rate == 0.
template <typename T>
DropoutResult<T> dropout(const Tensor<T>& input, double rate,
                         std::uint64_t seed, Mode mode);

template <typename T>
Tensor<T> dropout_backward(const DropoutResult<T>& record,
                           const Tensor<T>& grad_output);

template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& input);

template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& output,
                           const Tensor<T>& grad_output);

}  // namespace aaa
