#include <cmath>
#include <stdexcept>

#include "aaa/training.hpp"

namespace aaa {

template <typename T>
void rmsprop_step(std::vector<NamedTensor<T>>& params,
                  const std::vector<Tensor<T>>& grads, RmspropState<T>& state) {
  if (grads.size() != params.size())
    throw std::invalid_argument("rmsprop: " + std::to_string(grads.size()) +
                                " gradients for " +
                                std::to_string(params.size()) + " parameters");
  if (state.accumulators.empty())
    for (const auto& p : params) state.accumulators.emplace_back(p.value.shape());
  if (state.accumulators.size() != params.size())
    throw std::invalid_argument("rmsprop: accumulator count mismatch");

  const T rho = static_cast<T>(state.options.rho);
  const T lr = static_cast<T>(state.options.learning_rate);
  const T eps = static_cast<T>(state.options.eps);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<T>& w = params[k].value;
    Tensor<T>& v = state.accumulators[k];
    const Tensor<T>& g = grads[k];
    if (g.shape() != w.shape() || v.shape() != w.shape())
      throw std::invalid_argument("rmsprop: shape mismatch for " +
                                  params[k].name);
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = rho * v[i] + (T(1) - rho) * g[i] * g[i];
      w[i] -= lr * g[i] / (std::sqrt(v[i]) + eps);
    }
  }
}

template void rmsprop_step(std::vector<NamedTensor<float>>&,
                           const std::vector<Tensor<float>>&,
                           RmspropState<float>&);
template void rmsprop_step(std::vector<NamedTensor<double>>&,
                           const std::vector<Tensor<double>>&,
                           RmspropState<double>&);

}  // namespace aaa
