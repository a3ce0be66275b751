#include "aaa/unet.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "aaa/random.hpp"

namespace aaa {

void UNetConfig::validate() const {
  if (levels < 1) throw std::invalid_argument("levels must be >= 1");
  if (init_features < 1)
    throw std::invalid_argument("init_features must be >= 1");
  if (convs_per_block < 1)
    throw std::invalid_argument("convs_per_block must be >= 1");
  if (growth_factor < 1)
    throw std::invalid_argument("growth_factor must be >= 1");
  if (classes != 2) throw std::invalid_argument("classes must be 2");
  if (!(bottleneck_dropout >= 0.0 && bottleneck_dropout < 1.0))
    throw std::invalid_argument("bottleneck_dropout must lie in [0, 1)");
  if (!(clamp_hi > clamp_lo))
    throw std::invalid_argument("clamp window must be non-empty");
}

std::size_t UNetConfig::features(int level) const {
  std::size_t f = static_cast<std::size_t>(init_features);
  for (int i = 0; i < level; ++i) f *= static_cast<std::size_t>(growth_factor);
  return f;
}

// ---------------------------------------------------------------------------
// WeightStore

template <typename T>
void WeightStore<T>::add(Section section, std::string name, Tensor<T> value) {
  const auto s = static_cast<std::size_t>(section);
  if (index_[s].count(name))
    throw std::invalid_argument("duplicate weight name: " + name);
  index_[s].emplace(name, sections_[s].size());
  sections_[s].push_back({std::move(name), std::move(value)});
}

template <typename T>
std::vector<NamedTensor<T>>& WeightStore<T>::entries(Section s) {
  return sections_[static_cast<std::size_t>(s)];
}

template <typename T>
const std::vector<NamedTensor<T>>& WeightStore<T>::entries(Section s) const {
  return sections_[static_cast<std::size_t>(s)];
}

template <typename T>
Tensor<T>& WeightStore<T>::get(Section s, const std::string& name) {
  const auto& idx = index_[static_cast<std::size_t>(s)];
  auto it = idx.find(name);
  if (it == idx.end()) throw std::out_of_range("no weight named " + name);
  return sections_[static_cast<std::size_t>(s)][it->second].value;
}

template <typename T>
const Tensor<T>& WeightStore<T>::get(Section s, const std::string& name) const {
  const auto& idx = index_[static_cast<std::size_t>(s)];
  auto it = idx.find(name);
  if (it == idx.end()) throw std::out_of_range("no weight named " + name);
  return sections_[static_cast<std::size_t>(s)][it->second].value;
}

template <typename T>
bool WeightStore<T>::contains(Section s, const std::string& name) const {
  return index_[static_cast<std::size_t>(s)].count(name) != 0;
}

template <typename T>
std::size_t WeightStore<T>::param_index(const std::string& name) const {
  const auto& idx = index_[static_cast<std::size_t>(Section::kParams)];
  auto it = idx.find(name);
  if (it == idx.end()) throw std::out_of_range("no parameter named " + name);
  return it->second;
}

template <typename T>
std::size_t WeightStore<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : params()) n += e.value.size();
  return n;
}

template <typename T>
void WeightStore<T>::clear(Section s) {
  sections_[static_cast<std::size_t>(s)].clear();
  index_[static_cast<std::size_t>(s)].clear();
}

template <typename T>
template <typename U>
WeightStore<U> WeightStore<T>::cast() const {
  WeightStore<U> out;
  for (std::size_t s = 0; s < 3; ++s)
    for (const auto& e : sections_[s])
      out.add(static_cast<typename WeightStore<U>::Section>(s), e.name,
              e.value.template cast<U>());
  return out;
}

// ---------------------------------------------------------------------------
// Construction

namespace {

std::string unit_prefix(const std::string& block, int i) {
  return block + "/conv" + std::to_string(i);
}

template <typename T>
void add_conv(WeightStore<T>& w, Rng& rng, const std::string& prefix,
              std::size_t cin, std::size_t cout, std::size_t k) {
  Tensor<T> kernel({cout, cin, k, k, k});
  const double scale = std::sqrt(2.0 / static_cast<double>(cin * k * k * k));
  for (auto& v : kernel.values()) v = static_cast<T>(rng.normal() * scale);
  w.add(WeightStore<T>::Section::kParams, prefix + "/kernel", std::move(kernel));
  w.add(WeightStore<T>::Section::kParams, prefix + "/bias",
        Tensor<T>(Shape{cout}));
}

// conv -> batch norm -> ReLU unit; BN parameters share the conv prefix.
template <typename T>
void add_unit(WeightStore<T>& w, Rng& rng, const std::string& prefix,
              std::size_t cin, std::size_t cout) {
  using S = typename WeightStore<T>::Section;
  add_conv(w, rng, prefix, cin, cout, 3);
  w.add(S::kParams, prefix + "/gamma", Tensor<T>(Shape{cout}, T(1)));
  w.add(S::kParams, prefix + "/beta", Tensor<T>(Shape{cout}));
  w.add(S::kBuffers, prefix + "/running_mean", Tensor<T>(Shape{cout}));
  w.add(S::kBuffers, prefix + "/running_var", Tensor<T>(Shape{cout}, T(1)));
}

template <typename T>
void add_block(WeightStore<T>& w, Rng& rng, const std::string& block,
               std::size_t cin, std::size_t cout, int convs) {
  for (int i = 0; i < convs; ++i)
    add_unit(w, rng, unit_prefix(block, i), i == 0 ? cin : cout, cout);
}

}  // namespace

template <typename T>
WeightStore<T> build(const UNetConfig& config, std::uint64_t seed) {
  config.validate();
  WeightStore<T> w;
  Rng rng(seed);
  const int L = config.levels;
  const int c = config.convs_per_block;
  for (int l = 0; l < L; ++l)
    add_block(w, rng, "down" + std::to_string(l),
              l == 0 ? 1 : config.features(l - 1), config.features(l), c);
  add_block(w, rng, "bottleneck", config.features(L - 1), config.features(L),
            c);
  for (int l = L - 1; l >= 0; --l) {
    const std::string block = "up" + std::to_string(l);
    const std::size_t fin = config.features(l + 1), fout = config.features(l);
    Tensor<T> kernel({fin, fout, 2, 2, 1});
    const double scale = std::sqrt(2.0 / static_cast<double>(fin * 4));
    for (auto& v : kernel.values()) v = static_cast<T>(rng.normal() * scale);
    w.add(WeightStore<T>::Section::kParams, block + "/upconv/kernel",
          std::move(kernel));
    w.add(WeightStore<T>::Section::kParams, block + "/upconv/bias",
          Tensor<T>(Shape{fout}));
    add_block(w, rng, block, 2 * fout, fout, c);
  }
  add_conv(w, rng, "head/conv", config.features(0),
           static_cast<std::size_t>(config.classes), 1);
  return w;
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

template <typename T>
Tensor<T> unit_forward(WeightStore<T>& w, const UNetConfig& cfg,
                       const std::string& prefix, const Tensor<T>& x,
                       Mode mode, UnitTape<T>* tape) {
  using S = typename WeightStore<T>::Section;
  Tensor<T> conv =
      conv3d_forward(x, w.param(prefix + "/kernel"), w.param(prefix + "/bias"));
  BatchNormState<T> state{w.get(S::kBuffers, prefix + "/running_mean"),
                          w.get(S::kBuffers, prefix + "/running_var")};
  auto bn = batchnorm_forward(conv, w.param(prefix + "/gamma"),
                              w.param(prefix + "/beta"), state, mode,
                              cfg.batchnorm);
  if (mode == Mode::kTrain) {
    w.get(S::kBuffers, prefix + "/running_mean") = bn.state.running_mean;
    w.get(S::kBuffers, prefix + "/running_var") = bn.state.running_var;
  }
  Tensor<T> out = relu(bn.output);
  if (tape) {
    tape->input = x;
    tape->bn = std::move(bn.cache);
    tape->pre_relu = std::move(bn.output);
  }
  return out;
}

template <typename T>
Tensor<T> block_forward(WeightStore<T>& w, const UNetConfig& cfg,
                        const std::string& block, Tensor<T> x, Mode mode,
                        std::vector<UnitTape<T>>* tapes) {
  if (tapes) tapes->resize(static_cast<std::size_t>(cfg.convs_per_block));
  for (int i = 0; i < cfg.convs_per_block; ++i)
    x = unit_forward(w, cfg, unit_prefix(block, i), x, mode,
                     tapes ? &(*tapes)[static_cast<std::size_t>(i)] : nullptr);
  return x;
}

template <typename T>
void accumulate(std::vector<Tensor<T>>& grads, const WeightStore<T>& w,
                const std::string& name, const Tensor<T>& g) {
  Tensor<T>& dst = grads[w.param_index(name)];
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

template <typename T>
Tensor<T> unit_backward(const WeightStore<T>& w, const std::string& prefix,
                        const UnitTape<T>& tape, const Tensor<T>& grad,
                        std::vector<Tensor<T>>& grads) {
  Tensor<T> g = relu_backward(tape.pre_relu, grad);
  auto bn = batchnorm_backward(tape.bn, w.param(prefix + "/gamma"), g);
  accumulate(grads, w, prefix + "/gamma", bn.grad_params.at("gamma"));
  accumulate(grads, w, prefix + "/beta", bn.grad_params.at("beta"));
  auto conv =
      conv3d_backward(tape.input, w.param(prefix + "/kernel"), bn.grad_input);
  accumulate(grads, w, prefix + "/kernel", conv.grad_params.at("kernel"));
  accumulate(grads, w, prefix + "/bias", conv.grad_params.at("bias"));
  return std::move(conv.grad_input);
}

template <typename T>
Tensor<T> block_backward(const WeightStore<T>& w, const UNetConfig& cfg,
                         const std::string& block,
                         const std::vector<UnitTape<T>>& tapes, Tensor<T> g,
                         std::vector<Tensor<T>>& grads) {
  for (int i = cfg.convs_per_block - 1; i >= 0; --i)
    g = unit_backward(w, unit_prefix(block, i),
                      tapes[static_cast<std::size_t>(i)], g, grads);
  return g;
}

template <typename T>
void check_input(const UNetConfig& cfg, const Tensor<T>& volume) {
  if (volume.rank() != 5 || volume.dim(1) != 1)
    throw std::invalid_argument("network input must be [N,1,X,Y,Z], got " +
                                shape_str(volume.shape()));
  const std::size_t m = cfg.grid_multiple();
  if (volume.dim(2) % m != 0 || volume.dim(3) % m != 0)
    throw std::invalid_argument(
        "network input x/y extents " + shape_str(volume.shape()) +
        " must be multiples of " + std::to_string(m) +
        "; use pad_to_grid before inference");
  if (volume.dim(4) < 1) throw std::invalid_argument("network input has z = 0");
}

}  // namespace

template <typename T>
Tensor<T> forward(WeightStore<T>& weights, const UNetConfig& config,
                  const Tensor<T>& volume, Mode mode, std::uint64_t seed,
                  ForwardTape<T>* tape) {
  config.validate();
  check_input(config, volume);
  const int L = config.levels;
  const auto Ls = static_cast<std::size_t>(L);
  if (tape) {
    *tape = ForwardTape<T>{};
    tape->encoder.resize(Ls);
    tape->pools.resize(Ls);
    tape->up_inputs.resize(Ls);
    tape->decoder.resize(Ls);
  }
  std::vector<Tensor<T>> skips(Ls);
  Tensor<T> x = volume;
  for (int l = 0; l < L; ++l) {
    const auto li = static_cast<std::size_t>(l);
    x = block_forward(weights, config, "down" + std::to_string(l), std::move(x),
                      mode, tape ? &tape->encoder[li] : nullptr);
    skips[li] = x;
    auto pool = maxpool_forward(x);
    x = pool.output;
    if (tape) tape->pools[li] = std::move(pool);
  }
  x = block_forward(weights, config, "bottleneck", std::move(x), mode,
                    tape ? &tape->bottleneck : nullptr);
  auto drop = dropout(x, config.bottleneck_dropout, seed, mode);
  x = std::move(drop.output);
  if (tape) tape->drop.scale = std::move(drop.scale);
  for (int l = L - 1; l >= 0; --l) {
    const auto li = static_cast<std::size_t>(l);
    const std::string block = "up" + std::to_string(l);
    Tensor<T> up = upconv_forward(x, weights.param(block + "/upconv/kernel"),
                                  weights.param(block + "/upconv/bias"));
    if (tape) tape->up_inputs[li] = std::move(x);
    x = block_forward(weights, config, block, concat_channels(skips[li], up),
                      mode, tape ? &tape->decoder[li] : nullptr);
  }
  Tensor<T> logits = conv3d_forward(x, weights.param("head/conv/kernel"),
                                    weights.param("head/conv/bias"));
  Tensor<T> prob = softmax_channels(logits);
  if (tape) {
    tape->head_input = std::move(x);
    tape->probabilities = prob;
  }
  return prob;
}

template <typename T>
Tensor<T> infer(const WeightStore<T>& weights, const UNetConfig& config,
                const Tensor<T>& volume) {
  // Infer mode never writes to the store.
  return forward<T>(const_cast<WeightStore<T>&>(weights), config, volume,
                 Mode::kInfer, 0, nullptr);
}

template <typename T>
std::vector<Tensor<T>> backward(const WeightStore<T>& weights,
                                const UNetConfig& config,
                                const ForwardTape<T>& tape,
                                const Tensor<T>& grad_probabilities) {
  const int L = config.levels;
  std::vector<Tensor<T>> grads;
  grads.reserve(weights.params().size());
  for (const auto& e : weights.params()) grads.emplace_back(e.value.shape());

  Tensor<T> g = softmax_backward(tape.probabilities, grad_probabilities);
  auto head = conv3d_backward(tape.head_input,
                              weights.param("head/conv/kernel"), g);
  accumulate(grads, weights, "head/conv/kernel", head.grad_params.at("kernel"));
  accumulate(grads, weights, "head/conv/bias", head.grad_params.at("bias"));
  g = std::move(head.grad_input);

  std::vector<Tensor<T>> skip_grads(static_cast<std::size_t>(L));
  for (int l = 0; l < L; ++l) {
    const auto li = static_cast<std::size_t>(l);
    const std::string block = "up" + std::to_string(l);
    g = block_backward(weights, config, block, tape.decoder[li], g, grads);
    const std::size_t skip_channels = config.features(l);
    auto [gskip, gup] = split_channels(g, skip_channels);
    skip_grads[li] = std::move(gskip);
    auto up = upconv_backward(tape.up_inputs[li],
                              weights.param(block + "/upconv/kernel"), gup);
    accumulate(grads, weights, block + "/upconv/kernel",
               up.grad_params.at("kernel"));
    accumulate(grads, weights, block + "/upconv/bias",
               up.grad_params.at("bias"));
    g = std::move(up.grad_input);
  }
  g = dropout_backward(tape.drop, g);
  g = block_backward(weights, config, "bottleneck", tape.bottleneck, g, grads);
  for (int l = L - 1; l >= 0; --l) {
    const auto li = static_cast<std::size_t>(l);
    g = maxpool_backward(tape.pools[li], g);
    Tensor<T>& s = skip_grads[li];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s[i];
    g = block_backward(weights, config, "down" + std::to_string(l),
                       tape.encoder[li], g, grads);
  }
  return grads;
}

Tensor<float> normalize_intensities(const StudyVolume& volume,
                                    const UNetConfig& config) {
  const Dims d = volume.dims;
  Tensor<float> t({1, 1, d.x, d.y, d.z});
  const double lo = config.clamp_lo, hi = config.clamp_hi;
  for (std::size_t z = 0; z < d.z; ++z)
    for (std::size_t y = 0; y < d.y; ++y)
      for (std::size_t x = 0; x < d.x; ++x) {
        const float raw = volume.at(x, y, z);
        if (!std::isfinite(raw))
          throw std::invalid_argument("non-finite intensity at voxel (" +
                                      std::to_string(x) + ", " +
                                      std::to_string(y) + ", " +
                                      std::to_string(z) + ")");
        const double v = std::clamp<double>(raw, lo, hi);
        t.at(0, 0, x, y, z) = static_cast<float>((v - lo) / (hi - lo));
      }
  return t;
}

template <typename T>
MaskVolume binarize(const Tensor<T>& prob, double threshold, Spacing spacing) {
  if (prob.rank() != 5 || prob.dim(0) != 1 || prob.dim(1) != 2)
    throw std::invalid_argument("binarize expects [1,2,X,Y,Z], got " +
                                shape_str(prob.shape()));
  MaskVolume m({prob.dim(2), prob.dim(3), prob.dim(4)}, spacing);
  for (std::size_t z = 0; z < m.dims.z; ++z)
    for (std::size_t y = 0; y < m.dims.y; ++y)
      for (std::size_t x = 0; x < m.dims.x; ++x)
        m.at(x, y, z) =
            static_cast<double>(prob.at(0, 1, x, y, z)) > threshold ? 1 : 0;
  return m;
}

template <typename V>
Padded<V> pad_to_grid(const Grid<V>& volume, int levels) {
  if (levels < 0) throw std::invalid_argument("levels must be >= 0");
  const std::size_t m = std::size_t{1} << levels;
  const auto round_up = [m](std::size_t n) { return (n + m - 1) / m * m; };
  const std::size_t px = round_up(volume.dims.x) - volume.dims.x;
  const std::size_t py = round_up(volume.dims.y) - volume.dims.y;
  Padded<V> out;
  out.crop = {px / 2, px - px / 2, py / 2, py - py / 2};
  if (out.crop.empty()) {
    out.grid = volume;
    return out;
  }
  out.grid = Grid<V>({volume.dims.x + px, volume.dims.y + py, volume.dims.z},
                     volume.spacing);
  for (std::size_t z = 0; z < volume.dims.z; ++z)
    for (std::size_t y = 0; y < volume.dims.y; ++y)
      for (std::size_t x = 0; x < volume.dims.x; ++x)
        out.grid.at(x + out.crop.x_lo, y + out.crop.y_lo, z) =
            volume.at(x, y, z);
  return out;
}

template <typename V>
Grid<V> unpad(const Grid<V>& padded, const CropRecord& crop) {
  if (crop.empty()) return padded;
  if (crop.x_lo + crop.x_hi > padded.dims.x ||
      crop.y_lo + crop.y_hi > padded.dims.y)
    throw std::invalid_argument("crop record larger than the padded grid");
  Grid<V> out({padded.dims.x - crop.x_lo - crop.x_hi,
               padded.dims.y - crop.y_lo - crop.y_hi, padded.dims.z},
              padded.spacing);
  for (std::size_t z = 0; z < out.dims.z; ++z)
    for (std::size_t y = 0; y < out.dims.y; ++y)
      for (std::size_t x = 0; x < out.dims.x; ++x)
        out.at(x, y, z) = padded.at(x + crop.x_lo, y + crop.y_lo, z);
  return out;
}

template class WeightStore<float>;
template class WeightStore<double>;
template WeightStore<double> WeightStore<float>::cast<double>() const;
template WeightStore<float> WeightStore<double>::cast<float>() const;
template WeightStore<float> WeightStore<float>::cast<float>() const;
template WeightStore<double> WeightStore<double>::cast<double>() const;

#define AAA_INSTANTIATE_UNET(T)                                               \
  template WeightStore<T> build<T>(const UNetConfig&, std::uint64_t);         \
  template Tensor<T> forward(WeightStore<T>&, const UNetConfig&,              \
                             const Tensor<T>&, Mode, std::uint64_t,           \
                             ForwardTape<T>*);                                \
  template Tensor<T> infer(const WeightStore<T>&, const UNetConfig&,          \
                           const Tensor<T>&);                                 \
  template std::vector<Tensor<T>> backward(                                   \
      const WeightStore<T>&, const UNetConfig&, const ForwardTape<T>&,        \
      const Tensor<T>&);                                                      \
  template MaskVolume binarize(const Tensor<T>&, double, Spacing);

AAA_INSTANTIATE_UNET(float)
AAA_INSTANTIATE_UNET(double)
#undef AAA_INSTANTIATE_UNET

template Padded<float> pad_to_grid(const Grid<float>&, int);
template Padded<std::uint8_t> pad_to_grid(const Grid<std::uint8_t>&, int);
template Grid<float> unpad(const Grid<float>&, const CropRecord&);
template Grid<std::uint8_t> unpad(const Grid<std::uint8_t>&, const CropRecord&);

}  // namespace aaa
