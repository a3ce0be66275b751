#include <stdexcept>

#include "aaa/training.hpp"

namespace aaa {

template <typename T>
LossResult<T> smoothed_dice_loss(const Tensor<T>& p, const Tensor<T>& g) {
  if (p.shape() != g.shape())
    throw std::invalid_argument("dice loss shape mismatch: " +
                                shape_str(p.shape()) + " vs " +
                                shape_str(g.shape()));
  double spg = 0.0, sp = 0.0, sg = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    spg += static_cast<double>(p[i]) * g[i];
    sp += p[i];
    sg += g[i];
  }
  const double num = 2.0 * spg + 1.0;
  const double den = sp + sg + 1.0;
  LossResult<T> r;
  r.loss = -num / den;
  r.grad = Tensor<T>(p.shape());
  // d/dp_i of -num/den = -2 g_i / den + num / den^2
  const double a = -2.0 / den;
  const double b = num / (den * den);
  for (std::size_t i = 0; i < p.size(); ++i)
    r.grad[i] = static_cast<T>(a * g[i] + b);
  return r;
}

template <typename T>
Tensor<T> mask_to_tensor(const MaskVolume& mask) {
  const Dims d = mask.dims;
  Tensor<T> t({1, 1, d.x, d.y, d.z});
  for (std::size_t z = 0; z < d.z; ++z)
    for (std::size_t y = 0; y < d.y; ++y)
      for (std::size_t x = 0; x < d.x; ++x)
        t.at(0, 0, x, y, z) = mask.at(x, y, z) ? T(1) : T(0);
  return t;
}

template <typename T>
LossResult<T> smoothed_dice_loss(const Tensor<T>& p, const MaskVolume& g) {
  const Dims d = g.dims;
  const bool shaped5 = p.rank() == 5 && p.dim(0) == 1 && p.dim(1) == 1 &&
                       p.dim(2) == d.x && p.dim(3) == d.y && p.dim(4) == d.z;
  const bool shaped3 = p.rank() == 3 && p.dim(0) == d.x && p.dim(1) == d.y &&
                       p.dim(2) == d.z;
  if (!shaped5 && !shaped3)
    throw std::invalid_argument("dice loss shape mismatch: " +
                                shape_str(p.shape()) + " vs mask [" +
                                std::to_string(d.x) + "," +
                                std::to_string(d.y) + "," +
                                std::to_string(d.z) + "]");
  Tensor<T> gt = mask_to_tensor<T>(g);
  return smoothed_dice_loss(p, Tensor<T>(p.shape(), std::move(gt.values())));
}

template <typename T>
LossResult<T> dice_loss_on_probabilities(const Tensor<T>& prob,
                                         const Tensor<T>& target) {
  if (prob.rank() != 5 || prob.dim(0) != 1 || prob.dim(1) != 2)
    throw std::invalid_argument("expected probabilities [1,2,X,Y,Z], got " +
                                shape_str(prob.shape()));
  const std::size_t S = prob.dim(2) * prob.dim(3) * prob.dim(4);
  if (target.shape() != Shape{1, 1, prob.dim(2), prob.dim(3), prob.dim(4)})
    throw std::invalid_argument("dice loss target " +
                                shape_str(target.shape()) +
                                " does not match " + shape_str(prob.shape()));
  Tensor<T> aorta({1, 1, prob.dim(2), prob.dim(3), prob.dim(4)});
  std::copy_n(prob.data() + S, S, aorta.data());
  LossResult<T> inner = smoothed_dice_loss(aorta, target);
  LossResult<T> r;
  r.loss = inner.loss;
  r.grad = Tensor<T>(prob.shape());
  std::copy_n(inner.grad.data(), S, r.grad.data() + S);
  return r;
}

#define AAA_INSTANTIATE_LOSS(T)                                               \
  template LossResult<T> smoothed_dice_loss(const Tensor<T>&,                 \
                                            const Tensor<T>&);                \
  template LossResult<T> smoothed_dice_loss(const Tensor<T>&,                 \
                                            const MaskVolume&);               \
  template LossResult<T> dice_loss_on_probabilities(const Tensor<T>&,         \
                                                    const Tensor<T>&);        \
  template Tensor<T> mask_to_tensor(const MaskVolume&);

AAA_INSTANTIATE_LOSS(float)
AAA_INSTANTIATE_LOSS(double)
#undef AAA_INSTANTIATE_LOSS

}  // namespace aaa
