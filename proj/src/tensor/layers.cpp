#include "aaa/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

#include "aaa/random.hpp"

namespace aaa {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

// Upper bound on im2col buffer elements per chunk.
constexpr std::size_t kColumnBudget = std::size_t{1} << 22;

void require_rank5(const Shape& s, const char* what) {
  if (s.size() != 5)
    throw std::invalid_argument(std::string(what) + " must be 5-D, got " +
                                shape_str(s));
}

struct ConvGeometry {
  std::size_t n, cin, cout, x, y, z, k;
  std::size_t yz() const { return y * z; }
  std::size_t xyz() const { return x * y * z; }
  std::size_t rows() const { return cin * k * k * k; }
  // x-slabs per im2col chunk
  std::size_t slabs() const {
    return std::clamp<std::size_t>(kColumnBudget / (rows() * yz()), 1, x);
  }
};

template <typename T>
ConvGeometry conv_geometry(const Tensor<T>& input, const Tensor<T>& kernel) {
  require_rank5(input.shape(), "conv3d input");
  require_rank5(kernel.shape(), "conv3d kernel");
  const auto& ks = kernel.shape();
  if (ks[2] != ks[3] || ks[3] != ks[4] || (ks[2] != 3 && ks[2] != 1))
    throw std::invalid_argument("conv3d kernel must be 3x3x3 (or 1x1x1), got " +
                                shape_str(ks));
  if (input.dim(1) != ks[1])
    throw std::invalid_argument("conv3d channel mismatch: input " +
                                shape_str(input.shape()) + " vs kernel " +
                                shape_str(ks));
  return {input.dim(0), ks[1], ks[0], input.dim(2), input.dim(3),
          input.dim(4), ks[2]};
}

// Fills col[rows, (x1-x0)*Y*Z] for one sample; channel planes start at `in`.
template <typename T>
void im2col(const T* in, const ConvGeometry& g, std::size_t x0, std::size_t x1,
            T* col) {
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(g.k / 2);
  const std::size_t cols = (x1 - x0) * g.yz();
  const auto X = static_cast<std::ptrdiff_t>(g.x);
  const auto Y = static_cast<std::ptrdiff_t>(g.y);
  const auto Z = static_cast<std::ptrdiff_t>(g.z);
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    const T* plane = in + ci * g.xyz();
    for (std::size_t kx = 0; kx < g.k; ++kx)
      for (std::size_t ky = 0; ky < g.k; ++ky)
        for (std::size_t kz = 0; kz < g.k; ++kz, ++row) {
          T* dst = col + row * cols;
          const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - half;
          const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - half;
          const std::ptrdiff_t dz = static_cast<std::ptrdiff_t>(kz) - half;
          const std::ptrdiff_t zlo = std::max<std::ptrdiff_t>(0, -dz);
          const std::ptrdiff_t zhi = std::min<std::ptrdiff_t>(Z, Z - dz);
          for (auto x = static_cast<std::ptrdiff_t>(x0);
               x < static_cast<std::ptrdiff_t>(x1); ++x) {
            const std::ptrdiff_t sx = x + dx;
            for (std::ptrdiff_t y = 0; y < Y; ++y, dst += Z) {
              const std::ptrdiff_t sy = y + dy;
              if (sx < 0 || sx >= X || sy < 0 || sy >= Y || zhi <= zlo) {
                std::fill(dst, dst + Z, T(0));
                continue;
              }
              const T* src = plane + (sx * Y + sy) * Z;
              std::fill(dst, dst + zlo, T(0));
              std::copy(src + zlo + dz, src + zhi + dz, dst + zlo);
              std::fill(dst + zhi, dst + Z, T(0));
            }
          }
        }
  }
}

// Adjoint of im2col: accumulates col into the input-shaped buffer.
template <typename T>
void col2im(const T* col, const ConvGeometry& g, std::size_t x0,
            std::size_t x1, T* grad_in) {
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(g.k / 2);
  const std::size_t cols = (x1 - x0) * g.yz();
  const auto X = static_cast<std::ptrdiff_t>(g.x);
  const auto Y = static_cast<std::ptrdiff_t>(g.y);
  const auto Z = static_cast<std::ptrdiff_t>(g.z);
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    T* plane = grad_in + ci * g.xyz();
    for (std::size_t kx = 0; kx < g.k; ++kx)
      for (std::size_t ky = 0; ky < g.k; ++ky)
        for (std::size_t kz = 0; kz < g.k; ++kz, ++row) {
          const T* src = col + row * cols;
          const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - half;
          const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - half;
          const std::ptrdiff_t dz = static_cast<std::ptrdiff_t>(kz) - half;
          const std::ptrdiff_t zlo = std::max<std::ptrdiff_t>(0, -dz);
          const std::ptrdiff_t zhi = std::min<std::ptrdiff_t>(Z, Z - dz);
          for (auto x = static_cast<std::ptrdiff_t>(x0);
               x < static_cast<std::ptrdiff_t>(x1); ++x) {
            const std::ptrdiff_t sx = x + dx;
            for (std::ptrdiff_t y = 0; y < Y; ++y, src += Z) {
              const std::ptrdiff_t sy = y + dy;
              if (sx < 0 || sx >= X || sy < 0 || sy >= Y) continue;
              T* dst = plane + (sx * Y + sy) * Z + dz;
              for (std::ptrdiff_t z = zlo; z < zhi; ++z) dst[z] += src[z];
            }
          }
        }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& input, const Tensor<T>& kernel,
                         const Tensor<T>& bias) {
  const ConvGeometry g = conv_geometry(input, kernel);
  if (bias.size() != g.cout)
    throw std::invalid_argument("conv3d bias length " +
                                std::to_string(bias.size()) +
                                " != out channels " + std::to_string(g.cout));
  Tensor<T> out({g.n, g.cout, g.x, g.y, g.z});
  Eigen::Map<const RowMat<T>> w(kernel.data(), g.cout, g.rows());
  const auto xyz = static_cast<Eigen::Index>(g.xyz());
  for (std::size_t n = 0; n < g.n; ++n) {
    const T* in = input.data() + n * g.cin * g.xyz();
    T* dst = out.data() + n * g.cout * g.xyz();
    if (g.k == 1) {
      ConstStridedMap<T> src(in, g.cin, xyz, Eigen::OuterStride<>(xyz));
      StridedMap<T> o(dst, g.cout, xyz, Eigen::OuterStride<>(xyz));
      o.noalias() = w * src;
    } else {
      const std::size_t step = g.slabs();
      std::vector<T> col(g.rows() * step * g.yz());
      for (std::size_t x0 = 0; x0 < g.x; x0 += step) {
        const std::size_t x1 = std::min(g.x, x0 + step);
        const auto cols = static_cast<Eigen::Index>((x1 - x0) * g.yz());
        im2col(in, g, x0, x1, col.data());
        Eigen::Map<const RowMat<T>> c(col.data(), g.rows(), cols);
        StridedMap<T> o(dst + x0 * g.yz(), g.cout, cols,
                        Eigen::OuterStride<>(xyz));
        o.noalias() = w * c;
      }
    }
    for (std::size_t co = 0; co < g.cout; ++co) {
      T* p = dst + co * g.xyz();
      const T b = bias[co];
      for (std::size_t i = 0; i < g.xyz(); ++i) p[i] += b;
    }
  }
  return out;
}

template <typename T>
LayerGrads<T> conv3d_backward(const Tensor<T>& input, const Tensor<T>& kernel,
                              const Tensor<T>& grad_output) {
  const ConvGeometry g = conv_geometry(input, kernel);
  const Shape expected{g.n, g.cout, g.x, g.y, g.z};
  if (grad_output.shape() != expected)
    throw std::invalid_argument("conv3d grad_output shape " +
                                shape_str(grad_output.shape()) +
                                " != forward output shape " +
                                shape_str(expected));
  LayerGrads<T> grads;
  grads.grad_input = Tensor<T>(input.shape());
  Tensor<T> gk(kernel.shape());
  Tensor<T> gb(Shape{g.cout});
  Eigen::Map<const RowMat<T>> w(kernel.data(), g.cout, g.rows());
  Eigen::Map<RowMat<T>> gw(gk.data(), g.cout, g.rows());
  const auto xyz = static_cast<Eigen::Index>(g.xyz());
  for (std::size_t n = 0; n < g.n; ++n) {
    const T* in = input.data() + n * g.cin * g.xyz();
    const T* go = grad_output.data() + n * g.cout * g.xyz();
    T* gi = grads.grad_input.data() + n * g.cin * g.xyz();
    if (g.k == 1) {
      ConstStridedMap<T> src(in, g.cin, xyz, Eigen::OuterStride<>(xyz));
      ConstStridedMap<T> gout(go, g.cout, xyz, Eigen::OuterStride<>(xyz));
      StridedMap<T> gin(gi, g.cin, xyz, Eigen::OuterStride<>(xyz));
      gw.noalias() += gout * src.transpose();
      gin.noalias() = w.transpose() * gout;
    } else {
      const std::size_t step = g.slabs();
      std::vector<T> col(g.rows() * step * g.yz());
      for (std::size_t x0 = 0; x0 < g.x; x0 += step) {
        const std::size_t x1 = std::min(g.x, x0 + step);
        const auto cols = static_cast<Eigen::Index>((x1 - x0) * g.yz());
        im2col(in, g, x0, x1, col.data());
        Eigen::Map<RowMat<T>> c(col.data(), g.rows(), cols);
        ConstStridedMap<T> gout(go + x0 * g.yz(), g.cout, cols,
                                Eigen::OuterStride<>(xyz));
        gw.noalias() += gout * c.transpose();
        c.noalias() = w.transpose() * gout;
        col2im(col.data(), g, x0, x1, gi);
      }
    }
    for (std::size_t co = 0; co < g.cout; ++co) {
      const T* p = go + co * g.xyz();
      T acc = 0;
      for (std::size_t i = 0; i < g.xyz(); ++i) acc += p[i];
      gb[co] += acc;
    }
  }
  grads.grad_params.emplace("kernel", std::move(gk));
  grads.grad_params.emplace("bias", std::move(gb));
  return grads;
}

template <typename T>
BatchNormResult<T> batchnorm_forward(const Tensor<T>& input,
                                     const Tensor<T>& gamma,
                                     const Tensor<T>& beta,
                                     const BatchNormState<T>& state, Mode mode,
                                     const BatchNormOptions& opts) {
  require_rank5(input.shape(), "batchnorm input");
  const std::size_t N = input.dim(0), C = input.dim(1);
  const std::size_t S = input.dim(2) * input.dim(3) * input.dim(4);
  if (gamma.size() != C || beta.size() != C)
    throw std::invalid_argument("batchnorm gamma/beta length must equal " +
                                std::to_string(C) + " channels");
  BatchNormResult<T> r;
  r.output = Tensor<T>(input.shape());
  r.cache.x_hat = Tensor<T>(input.shape());
  r.cache.inv_std.assign(C, T(0));

  if (mode == Mode::kInfer) {
    if (!state.populated() || state.running_mean.size() != C)
      throw std::invalid_argument(
          "batchnorm infer mode requires populated running statistics");
    for (std::size_t c = 0; c < C; ++c) {
      const T inv = T(1) / std::sqrt(state.running_var[c] + T(opts.eps));
      r.cache.inv_std[c] = inv;
      for (std::size_t n = 0; n < N; ++n) {
        const std::size_t base = (n * C + c) * S;
        for (std::size_t i = 0; i < S; ++i) {
          const T xh = (input[base + i] - state.running_mean[c]) * inv;
          r.cache.x_hat[base + i] = xh;
          r.output[base + i] = gamma[c] * xh + beta[c];
        }
      }
    }
    r.state = state;
    return r;
  }

  r.state = state;
  if (!r.state.populated() || r.state.running_mean.size() != C) {
    r.state.running_mean = Tensor<T>(Shape{C}, T(0));
    r.state.running_var = Tensor<T>(Shape{C}, T(1));
  }
  const double m = static_cast<double>(N * S);
  for (std::size_t c = 0; c < C; ++c) {
    double sum = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const T* p = input.data() + (n * C + c) * S;
      for (std::size_t i = 0; i < S; ++i) sum += p[i];
    }
    const double mean = sum / m;
    double sq = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const T* p = input.data() + (n * C + c) * S;
      for (std::size_t i = 0; i < S; ++i) {
        const double d = p[i] - mean;
        sq += d * d;
      }
    }
    const double var = sq / m;
    const T inv = static_cast<T>(1.0 / std::sqrt(var + opts.eps));
    const T tmean = static_cast<T>(mean);
    r.cache.inv_std[c] = inv;
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t base = (n * C + c) * S;
      for (std::size_t i = 0; i < S; ++i) {
        const T xh = (input[base + i] - tmean) * inv;
        r.cache.x_hat[base + i] = xh;
        r.output[base + i] = gamma[c] * xh + beta[c];
      }
    }
    const T mom = static_cast<T>(opts.momentum);
    r.state.running_mean[c] =
        mom * r.state.running_mean[c] + (T(1) - mom) * tmean;
    r.state.running_var[c] =
        mom * r.state.running_var[c] + (T(1) - mom) * static_cast<T>(var);
  }
  return r;
}

template <typename T>
LayerGrads<T> batchnorm_backward(const BatchNormCache<T>& cache,
                                 const Tensor<T>& gamma,
                                 const Tensor<T>& grad_output) {
  const Tensor<T>& xh = cache.x_hat;
  if (grad_output.shape() != xh.shape())
    throw std::invalid_argument("batchnorm grad_output shape " +
                                shape_str(grad_output.shape()) +
                                " != input shape " + shape_str(xh.shape()));
  const std::size_t N = xh.dim(0), C = xh.dim(1);
  const std::size_t S = xh.dim(2) * xh.dim(3) * xh.dim(4);
  const double m = static_cast<double>(N * S);
  LayerGrads<T> g;
  g.grad_input = Tensor<T>(xh.shape());
  Tensor<T> ggamma(Shape{C}), gbeta(Shape{C});
  for (std::size_t c = 0; c < C; ++c) {
    double sdy = 0.0, sdyx = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t base = (n * C + c) * S;
      for (std::size_t i = 0; i < S; ++i) {
        sdy += grad_output[base + i];
        sdyx += static_cast<double>(grad_output[base + i]) * xh[base + i];
      }
    }
    ggamma[c] = static_cast<T>(sdyx);
    gbeta[c] = static_cast<T>(sdy);
    const T k = static_cast<T>(gamma[c] * cache.inv_std[c] / m);
    const T mean_dy = static_cast<T>(sdy);
    const T mean_dyx = static_cast<T>(sdyx);
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t base = (n * C + c) * S;
      for (std::size_t i = 0; i < S; ++i)
        g.grad_input[base + i] =
            k * (static_cast<T>(m) * grad_output[base + i] - mean_dy -
                 xh[base + i] * mean_dyx);
    }
  }
  g.grad_params.emplace("gamma", std::move(ggamma));
  g.grad_params.emplace("beta", std::move(gbeta));
  return g;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i)
    out[i] = input[i] > T(0) ? input[i] : T(0);
  return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_output) {
  if (input.shape() != grad_output.shape())
    throw std::invalid_argument("relu_backward shape mismatch");
  Tensor<T> g(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i)
    g[i] = input[i] > T(0) ? grad_output[i] : T(0);
  return g;
}

template <typename T>
PoolResult<T> maxpool_forward(const Tensor<T>& input) {
  require_rank5(input.shape(), "maxpool input");
  const std::size_t N = input.dim(0), C = input.dim(1), X = input.dim(2),
                    Y = input.dim(3), Z = input.dim(4);
  if (X % 2 != 0 || Y % 2 != 0)
    throw std::invalid_argument("maxpool 2x2x1 needs even x and y, got " +
                                shape_str(input.shape()) +
                                "; pad the volume with pad_to_grid first");
  if (input.size() > std::numeric_limits<std::uint32_t>::max())
    throw std::invalid_argument("maxpool input too large");
  PoolResult<T> r;
  r.input_shape = input.shape();
  r.output = Tensor<T>({N, C, X / 2, Y / 2, Z});
  r.argmax.resize(r.output.size());
  std::size_t o = 0;
  for (std::size_t nc = 0; nc < N * C; ++nc)
    for (std::size_t x = 0; x < X / 2; ++x)
      for (std::size_t y = 0; y < Y / 2; ++y)
        for (std::size_t z = 0; z < Z; ++z, ++o) {
          std::size_t best = ((nc * X + 2 * x) * Y + 2 * y) * Z + z;
          for (std::size_t dx = 0; dx < 2; ++dx)
            for (std::size_t dy = 0; dy < 2; ++dy) {
              const std::size_t idx =
                  ((nc * X + 2 * x + dx) * Y + 2 * y + dy) * Z + z;
              if (input[idx] > input[best]) best = idx;
            }
          r.output[o] = input[best];
          r.argmax[o] = static_cast<std::uint32_t>(best);
        }
  return r;
}

template <typename T>
Tensor<T> maxpool_backward(const PoolResult<T>& record,
                           const Tensor<T>& grad_output) {
  if (grad_output.shape() != record.output.shape())
    throw std::invalid_argument("maxpool grad_output shape " +
                                shape_str(grad_output.shape()) +
                                " != pooled shape " +
                                shape_str(record.output.shape()));
  Tensor<T> g(record.input_shape);
  for (std::size_t o = 0; o < grad_output.size(); ++o)
    g[record.argmax[o]] += grad_output[o];
  return g;
}

namespace {

template <typename T>
void check_upconv(const Tensor<T>& input, const Tensor<T>& kernel) {
  require_rank5(input.shape(), "upconv input");
  require_rank5(kernel.shape(), "upconv kernel");
  const auto& ks = kernel.shape();
  if (ks[2] != 2 || ks[3] != 2 || ks[4] != 1)
    throw std::invalid_argument("upconv kernel must be [Cin,Cout,2,2,1], got " +
                                shape_str(ks));
  if (ks[0] != input.dim(1))
    throw std::invalid_argument("upconv channel mismatch: input " +
                                shape_str(input.shape()) + " vs kernel " +
                                shape_str(ks));
}

// Kernel tap (i, j) as a [Cout, Cin] matrix.
template <typename T>
RowMat<T> upconv_tap(const Tensor<T>& kernel, std::size_t i, std::size_t j) {
  const std::size_t cin = kernel.dim(0), cout = kernel.dim(1);
  RowMat<T> m(cout, cin);
  for (std::size_t ci = 0; ci < cin; ++ci)
    for (std::size_t co = 0; co < cout; ++co)
      m(co, ci) = kernel[((ci * cout + co) * 2 + i) * 2 + j];
  return m;
}

}  // namespace

template <typename T>
Tensor<T> upconv_forward(const Tensor<T>& input, const Tensor<T>& kernel,
                         const Tensor<T>& bias) {
  check_upconv(input, kernel);
  const std::size_t N = input.dim(0), Cin = input.dim(1), X = input.dim(2),
                    Y = input.dim(3), Z = input.dim(4), Cout = kernel.dim(1);
  if (bias.size() != Cout)
    throw std::invalid_argument("upconv bias length mismatch");
  const std::size_t S = X * Y * Z;
  const std::size_t OX = 2 * X, OY = 2 * Y;
  Tensor<T> out({N, Cout, OX, OY, Z});
  RowMat<T> tmp(Cout, S);
  for (std::size_t n = 0; n < N; ++n) {
    Eigen::Map<const RowMat<T>> in(input.data() + n * Cin * S, Cin, S);
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j) {
        tmp.noalias() = upconv_tap(kernel, i, j) * in;
        for (std::size_t co = 0; co < Cout; ++co) {
          const T* src = tmp.data() + co * S;
          T* plane = out.data() + (n * Cout + co) * OX * OY * Z;
          for (std::size_t x = 0; x < X; ++x)
            for (std::size_t y = 0; y < Y; ++y) {
              T* dst = plane + ((2 * x + i) * OY + 2 * y + j) * Z;
              const T* s = src + (x * Y + y) * Z;
              for (std::size_t z = 0; z < Z; ++z) dst[z] = s[z] + bias[co];
            }
        }
      }
  }
  return out;
}

template <typename T>
LayerGrads<T> upconv_backward(const Tensor<T>& input, const Tensor<T>& kernel,
                              const Tensor<T>& grad_output) {
  check_upconv(input, kernel);
  const std::size_t N = input.dim(0), Cin = input.dim(1), X = input.dim(2),
                    Y = input.dim(3), Z = input.dim(4), Cout = kernel.dim(1);
  const Shape expected{N, Cout, 2 * X, 2 * Y, Z};
  if (grad_output.shape() != expected)
    throw std::invalid_argument("upconv grad_output shape " +
                                shape_str(grad_output.shape()) + " != " +
                                shape_str(expected));
  const std::size_t S = X * Y * Z;
  const std::size_t OY = 2 * Y;
  LayerGrads<T> g;
  g.grad_input = Tensor<T>(input.shape());
  Tensor<T> gk(kernel.shape());
  Tensor<T> gb(Shape{Cout});
  RowMat<T> gtap(Cout, S);
  for (std::size_t n = 0; n < N; ++n) {
    Eigen::Map<const RowMat<T>> in(input.data() + n * Cin * S, Cin, S);
    Eigen::Map<RowMat<T>> gin(g.grad_input.data() + n * Cin * S, Cin, S);
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j) {
        for (std::size_t co = 0; co < Cout; ++co) {
          T* dst = gtap.data() + co * S;
          const T* plane = grad_output.data() + (n * Cout + co) * 2 * X * OY * Z;
          for (std::size_t x = 0; x < X; ++x)
            for (std::size_t y = 0; y < Y; ++y) {
              const T* s = plane + ((2 * x + i) * OY + 2 * y + j) * Z;
              std::copy(s, s + Z, dst + (x * Y + y) * Z);
            }
        }
        gin.noalias() += upconv_tap(kernel, i, j).transpose() * gtap;
        const RowMat<T> gt = gtap * in.transpose();  // [Cout, Cin]
        for (std::size_t ci = 0; ci < Cin; ++ci)
          for (std::size_t co = 0; co < Cout; ++co)
            gk[((ci * Cout + co) * 2 + i) * 2 + j] += gt(co, ci);
        for (std::size_t co = 0; co < Cout; ++co) gb[co] += gtap.row(co).sum();
      }
  }
  g.grad_params.emplace("kernel", std::move(gk));
  g.grad_params.emplace("bias", std::move(gb));
  return g;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank5(a.shape(), "concat input a");
  require_rank5(b.shape(), "concat input b");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3) ||
      a.dim(4) != b.dim(4))
    throw std::invalid_argument("concat_channels mismatch: " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  const std::size_t N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1);
  const std::size_t S = a.dim(2) * a.dim(3) * a.dim(4);
  Tensor<T> out({N, Ca + Cb, a.dim(2), a.dim(3), a.dim(4)});
  for (std::size_t n = 0; n < N; ++n) {
    T* dst = out.data() + n * (Ca + Cb) * S;
    std::copy_n(a.data() + n * Ca * S, Ca * S, dst);
    std::copy_n(b.data() + n * Cb * S, Cb * S, dst + Ca * S);
  }
  return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& grad,
                                               std::size_t channels_a) {
  require_rank5(grad.shape(), "split_channels input");
  const std::size_t N = grad.dim(0), C = grad.dim(1);
  if (channels_a > C)
    throw std::invalid_argument("split_channels: split point beyond channels");
  const std::size_t Cb = C - channels_a;
  const std::size_t S = grad.dim(2) * grad.dim(3) * grad.dim(4);
  Tensor<T> a({N, channels_a, grad.dim(2), grad.dim(3), grad.dim(4)});
  Tensor<T> b({N, Cb, grad.dim(2), grad.dim(3), grad.dim(4)});
  for (std::size_t n = 0; n < N; ++n) {
    const T* src = grad.data() + n * C * S;
    std::copy_n(src, channels_a * S, a.data() + n * channels_a * S);
    std::copy_n(src + channels_a * S, Cb * S, b.data() + n * Cb * S);
  }
  return {std::move(a), std::move(b)};
}

template <typename T>
DropoutResult<T> dropout(const Tensor<T>& input, double rate,
                         std::uint64_t seed, Mode mode) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw std::invalid_argument("dropout rate must lie in [0, 1), got " +
                                std::to_string(rate));
  DropoutResult<T> r;
  if (mode == Mode::kInfer || rate == 0.0) {
    r.output = input;
    return r;
  }
  Rng rng(seed);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  r.scale.resize(input.size());
  r.output = Tensor<T>(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    r.scale[i] = rng.uniform() < rate ? T(0) : keep_scale;
    r.output[i] = input[i] * r.scale[i];
  }
  return r;
}

template <typename T>
Tensor<T> dropout_backward(const DropoutResult<T>& record,
                           const Tensor<T>& grad_output) {
  if (record.scale.empty()) return grad_output;
  if (grad_output.size() != record.scale.size())
    throw std::invalid_argument("dropout_backward shape mismatch");
  Tensor<T> g(grad_output.shape());
  for (std::size_t i = 0; i < g.size(); ++i)
    g[i] = grad_output[i] * record.scale[i];
  return g;
}

template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& input) {
  require_rank5(input.shape(), "softmax input");
  const std::size_t N = input.dim(0), C = input.dim(1);
  const std::size_t S = input.dim(2) * input.dim(3) * input.dim(4);
  if (C < 2) throw std::invalid_argument("softmax needs at least 2 channels");
  Tensor<T> out(input.shape());
  for (std::size_t n = 0; n < N; ++n) {
    const T* in = input.data() + n * C * S;
    T* o = out.data() + n * C * S;
    for (std::size_t s = 0; s < S; ++s) {
      T mx = in[s];
      for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, in[c * S + s]);
      T sum = 0;
      for (std::size_t c = 0; c < C; ++c) {
        const T e = std::exp(in[c * S + s] - mx);
        o[c * S + s] = e;
        sum += e;
      }
      for (std::size_t c = 0; c < C; ++c) o[c * S + s] /= sum;
    }
  }
  return out;
}

template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& output,
                           const Tensor<T>& grad_output) {
  if (output.shape() != grad_output.shape())
    throw std::invalid_argument("softmax_backward shape mismatch");
  const std::size_t N = output.dim(0), C = output.dim(1);
  const std::size_t S = output.dim(2) * output.dim(3) * output.dim(4);
  Tensor<T> g(output.shape());
  for (std::size_t n = 0; n < N; ++n) {
    const T* y = output.data() + n * C * S;
    const T* gy = grad_output.data() + n * C * S;
    T* gx = g.data() + n * C * S;
    for (std::size_t s = 0; s < S; ++s) {
      T dot = 0;
      for (std::size_t c = 0; c < C; ++c) dot += y[c * S + s] * gy[c * S + s];
      for (std::size_t c = 0; c < C; ++c)
        gx[c * S + s] = y[c * S + s] * (gy[c * S + s] - dot);
    }
  }
  return g;
}

#define AAA_INSTANTIATE_LAYERS(T)                                              \
  template Tensor<T> conv3d_forward(const Tensor<T>&, const Tensor<T>&,        \
                                    const Tensor<T>&);                         \
  template LayerGrads<T> conv3d_backward(const Tensor<T>&, const Tensor<T>&,   \
                                         const Tensor<T>&);                    \
  template BatchNormResult<T> batchnorm_forward(                               \
      const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,                    \
      const BatchNormState<T>&, Mode, const BatchNormOptions&);                \
  template LayerGrads<T> batchnorm_backward(                                   \
      const BatchNormCache<T>&, const Tensor<T>&, const Tensor<T>&);           \
  template Tensor<T> relu(const Tensor<T>&);                                   \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);        \
  template PoolResult<T> maxpool_forward(const Tensor<T>&);                    \
  template Tensor<T> maxpool_backward(const PoolResult<T>&, const Tensor<T>&); \
  template Tensor<T> upconv_forward(const Tensor<T>&, const Tensor<T>&,        \
                                    const Tensor<T>&);                         \
  template LayerGrads<T> upconv_backward(const Tensor<T>&, const Tensor<T>&,   \
                                         const Tensor<T>&);                    \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);      \
  template std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>&,    \
                                                          std::size_t);        \
  template DropoutResult<T> dropout(const Tensor<T>&, double, std::uint64_t,   \
                                    Mode);                                     \
  template Tensor<T> dropout_backward(const DropoutResult<T>&,                 \
                                      const Tensor<T>&);                       \
  template Tensor<T> softmax_channels(const Tensor<T>&);                       \
  template Tensor<T> softmax_backward(const Tensor<T>&, const Tensor<T>&);

AAA_INSTANTIATE_LAYERS(float)
AAA_INSTANTIATE_LAYERS(double)

#undef AAA_INSTANTIATE_LAYERS

}  // namespace aaa
