#include "dmnet/model.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <stdexcept>
#include <vector>

#include "dmnet/ops.hpp"
#include "dmnet/optim.hpp"

namespace dmnet {

std::string_view to_string(Mode mode) {
  return mode == Mode::SuperResolution ? "sr" : "enhance";
}

Mode parse_mode(std::string_view text) {
  if (text == "sr") return Mode::SuperResolution;
  if (text == "enhance") return Mode::DetailEnhance;
  throw std::invalid_argument("unknown mode '" + std::string(text) + "' (expected sr|enhance)");
}

ModelSpec ModelSpec::super_resolution() { return ModelSpec{}; }

ModelSpec ModelSpec::detail_enhance() {
  ModelSpec s;
  s.mode = Mode::DetailEnhance;
  s.use_spade = true;
  return s;
}

void ModelSpec::validate() const {
  if (num_blocks < 1) throw std::invalid_argument("model.num_blocks must be >= 1");
  if (channels < 1) throw std::invalid_argument("model.channels must be >= 1");
  if (scale < 2 || !std::has_single_bit(static_cast<unsigned>(scale))) {
    throw std::invalid_argument("model.scale must be a power of two >= 2");
  }
  if (kernel != 3 && kernel != 1) throw std::invalid_argument("model.kernel must be 1 or 3");
  if (leaky_slope < 0) throw std::invalid_argument("model.leaky_slope must be >= 0");
  if (use_spade && mode != Mode::DetailEnhance) {
    throw std::invalid_argument("model.use_spade requires enhance mode");
  }
}

int ModelSpec::upsample_stages() const { return std::countr_zero(static_cast<unsigned>(scale)); }

namespace {

// Residual branches and modulation maps start small so that alpha ~ 1, beta ~ 0
// and each block is close to identity; plain He init makes the output explode.
constexpr float kResidualGain = 0.1f;

void add_conv(ParamStore<float>& store, Rng& rng, const std::string& name, int cin, int cout,
              int k, float bias = 0.0f, float gain = 1.0f) {
  auto w = he_init(Shape(cout, cin, k, k), cin * k * k, rng);
  for (float& v : w.data()) v *= gain;
  store.add(name + ".weight", std::move(w));
  store.add(name + ".bias", Tensorf::full(Shape(1, cout, 1, 1), bias, true));
}

template <typename T>
Tensor<T> conv(Tape<T>& tape, const ParamStore<T>& p, const std::string& name,
               const Tensor<T>& x, int stride = 1) {
  const Tensor<T>& w = p.get(name + ".weight");
  return ops::conv2d(tape, x, w, p.get(name + ".bias"), stride, w.shape().h() / 2);
}

template <typename T>
Tensor<T> lrelu(Tape<T>& tape, const Tensor<T>& x, double slope) {
  return ops::leaky_relu(tape, x, static_cast<T>(slope));
}

void require_spatial_match(const char* what, const Shape& a, const Shape& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) {
    throw ShapeError(std::string(what) + ": spatial mismatch " + a.str() + " vs " + b.str());
  }
}

void require_rgb(const char* what, const Shape& s) {
  if (s.c() != 3) {
    throw ShapeError(std::string(what) + ": expected 3 input channels (dim C), got " +
                     std::to_string(s.c()));
  }
}

void build_sfe(ParamStore<float>& store, Rng& rng, const ModelSpec& spec) {
  const int c = spec.channels, k = spec.kernel;
  add_conv(store, rng, "sfe.head", 3, c, k);
  for (const char* res : {"sfe.res1", "sfe.res2"}) {
    add_conv(store, rng, std::string(res) + ".conv1", c, c, k);
    add_conv(store, rng, std::string(res) + ".conv2", c, c, k, 0.0f, kResidualGain);
  }
  add_conv(store, rng, "sfe.conv1", c, c, k);
  add_conv(store, rng, "sfe.conv2", c, c, k);
  add_conv(store, rng, "sfe.out", c, c, k);
  if (spec.mode == Mode::DetailEnhance) {
    add_conv(store, rng, "sfe.down", c * spec.scale * spec.scale, c, 1);
  }
}

void build_block(ParamStore<float>& store, Rng& rng, const ModelSpec& spec,
                 const std::string& prefix) {
  const int c = spec.channels, k = spec.kernel;
  for (int i = 1; i <= 4; ++i) {
    add_conv(store, rng, prefix + ".conv" + std::to_string(i), c * i, c, k, 0.0f, kResidualGain);
  }
  add_conv(store, rng, prefix + ".fuse", c * 5, c, 1, 0.0f, kResidualGain);
  add_conv(store, rng, prefix + ".mod.shared", c, c, 1);
  add_conv(store, rng, prefix + ".mod.alpha", c, c, 1, 1.0f, kResidualGain);
  add_conv(store, rng, prefix + ".mod.beta", c, c, 1, 0.0f, kResidualGain);
}

// SPADE follows every second block, plus the last one when the count is odd.
bool spade_after(const ModelSpec& spec, int block) {
  return spec.use_spade && ((block + 1) % 2 == 0 || block + 1 == spec.num_blocks);
}

}  // namespace

ParamStore<float> build_generator(const ModelSpec& spec) {
  spec.validate();
  ParamStore<float> store;
  Rng rng(spec.seed);
  const int c = spec.channels, k = spec.kernel;
  const int r2 = spec.scale * spec.scale;

  build_sfe(store, rng, spec);
  add_conv(store, rng, "head", 3, c, k);
  if (spec.mode == Mode::DetailEnhance) {
    add_conv(store, rng, "down", c * r2, c, 1);
    if (spec.use_spade) add_conv(store, rng, "guide", c * r2, c, 1);
  }
  for (int b = 0; b < spec.num_blocks; ++b) {
    build_block(store, rng, spec, "blocks." + std::to_string(b));
    if (spade_after(spec, b)) {
      const std::string p = "spade." + std::to_string(b);
      add_conv(store, rng, p + ".shared", c, c, k);
      add_conv(store, rng, p + ".alpha", c, c, k, 1.0f, kResidualGain);
      add_conv(store, rng, p + ".beta", c, c, k, 0.0f, kResidualGain);
    }
  }
  for (int s = 0; s < spec.upsample_stages(); ++s) {
    add_conv(store, rng, "up." + std::to_string(s), c, c * 4, k);
  }
  add_conv(store, rng, "out", c, 3, k);
  return store;
}

ParamStore<float> build_critic(std::uint64_t seed) {
  ParamStore<float> store;
  Rng rng(seed);
  const std::array<int, 5> widths{3, 32, 64, 64, 64};
  for (int i = 0; i < 4; ++i) {
    add_conv(store, rng, "critic.conv" + std::to_string(i + 1), widths[i], widths[i + 1], 3);
  }
  add_conv(store, rng, "critic.score", widths[4], 1, 1);
  return store;
}

template <typename T>
Tensor<T> modulate(Tape<T>& tape, const Tensor<T>& x, const ModulationParams<T>& m) {
  if (x.shape() != m.alpha.shape() || x.shape() != m.beta.shape()) {
    throw ShapeError("modulate: x " + x.shape().str() + " vs alpha " + m.alpha.shape().str() +
                     " / beta " + m.beta.shape().str());
  }
  return ops::add(tape, ops::mul(tape, m.alpha, x), m.beta);
}

template <typename T>
ModulationParams<T> modulation_layer(Tape<T>& tape, const ParamStore<T>& params,
                                     std::string_view prefix, const ModelSpec& spec,
                                     const Tensor<T>& feat, const Tensor<T>& ai_feat) {
  require_spatial_match("modulation_layer", feat.shape(), ai_feat.shape());
  const std::string p(prefix);
  auto shared = lrelu(tape, conv(tape, params, p + ".shared", ai_feat), spec.leaky_slope);
  ModulationParams<T> m{conv(tape, params, p + ".alpha", shared),
                        conv(tape, params, p + ".beta", shared)};
  if (m.alpha.shape() != feat.shape()) {
    throw ShapeError("modulation_layer: produced " + m.alpha.shape().str() + " for feature " +
                     feat.shape().str());
  }
  return m;
}

template <typename T>
Tensor<T> sfe_forward(Tape<T>& tape, const ParamStore<T>& params, const ModelSpec& spec,
                      const Tensor<T>& img) {
  require_rgb("sfe_forward", img.shape());
  const double a = spec.leaky_slope;
  auto f = lrelu(tape, conv(tape, params, "sfe.head", img), a);
  for (const char* res : {"sfe.res1", "sfe.res2"}) {
    const std::string p(res);
    auto r = lrelu(tape, conv(tape, params, p + ".conv1", f), a);
    r = conv(tape, params, p + ".conv2", r);
    f = ops::add(tape, f, r);
  }
  f = lrelu(tape, conv(tape, params, "sfe.conv1", f), a);
  f = lrelu(tape, conv(tape, params, "sfe.conv2", f), a);
  f = conv(tape, params, "sfe.out", f);
  if (spec.mode == Mode::DetailEnhance) {
    f = conv(tape, params, "sfe.down", ops::space_to_depth(tape, f, spec.scale));
  }
  return f;
}

template <typename T>
Tensor<T> dense_modulation_block(Tape<T>& tape, const ParamStore<T>& params,
                                 std::string_view prefix, const ModelSpec& spec,
                                 const Tensor<T>& x, const Tensor<T>& ai_feat) {
  require_spatial_match("dense_modulation_block", x.shape(), ai_feat.shape());
  const std::string p(prefix);
  std::vector<Tensor<T>> features{x};
  for (int i = 1; i <= 4; ++i) {
    auto in = features.size() == 1 ? x : ops::concat_channels<T>(tape, features);
    features.push_back(
        lrelu(tape, conv(tape, params, p + ".conv" + std::to_string(i), in), spec.leaky_slope));
  }
  auto fused = conv(tape, params, p + ".fuse", ops::concat_channels<T>(tape, features));
  auto mod = modulation_layer(tape, params, p + ".mod", spec, fused, ai_feat);
  return ops::add(tape, x, modulate(tape, fused, mod));
}

template <typename T>
Tensor<T> spade_layer(Tape<T>& tape, const ParamStore<T>& params, std::string_view prefix,
                      const ModelSpec& spec, const Tensor<T>& x, const Tensor<T>& guide) {
  require_spatial_match("spade_layer", x.shape(), guide.shape());
  const std::string p(prefix);
  auto normalized = ops::instance_norm(tape, x, static_cast<T>(kSpadeEps));
  auto shared = lrelu(tape, conv(tape, params, p + ".shared", guide), spec.leaky_slope);
  ModulationParams<T> m{conv(tape, params, p + ".alpha", shared),
                        conv(tape, params, p + ".beta", shared)};
  return modulate(tape, normalized, m);
}

namespace {

template <typename T>
Tensor<T> upsample_tail(Tape<T>& tape, const ParamStore<T>& params, const ModelSpec& spec,
                        Tensor<T> f) {
  for (int s = 0; s < spec.upsample_stages(); ++s) {
    f = conv(tape, params, "up." + std::to_string(s), f);
    f = lrelu(tape, ops::pixel_shuffle(tape, f, 2), spec.leaky_slope);
  }
  return conv(tape, params, "out", f);
}

// Nearest-neighbour upsampling expressed as channel replication + pixel shuffle.
template <typename T>
Tensor<T> nearest_upsample(Tape<T>& tape, const Tensor<T>& img, int r) {
  std::vector<Tensor<T>> parts;
  for (int c = 0; c < img.shape().c(); ++c) {
    auto plane = ops::slice_channels(tape, img, c, c + 1);
    for (int k = 0; k < r * r; ++k) parts.push_back(plane);
  }
  return ops::pixel_shuffle(tape, ops::concat_channels<T>(tape, parts), r);
}

}  // namespace

template <typename T>
Tensor<T> sr_generator_forward(Tape<T>& tape, const ParamStore<T>& params,
                               const ModelSpec& spec, const Tensor<T>& img) {
  require_rgb("sr_generator_forward", img.shape());
  auto ai = sfe_forward(tape, params, spec, img);
  auto f = conv(tape, params, "head", img);
  for (int b = 0; b < spec.num_blocks; ++b) {
    f = dense_modulation_block(tape, params, "blocks." + std::to_string(b), spec, f, ai);
  }
  auto out = upsample_tail(tape, params, spec, f);
  if (spec.global_skip) out = ops::add(tape, out, nearest_upsample(tape, img, spec.scale));
  return out;
}

template <typename T>
Tensor<T> enh_generator_forward(Tape<T>& tape, const ParamStore<T>& params,
                                const ModelSpec& spec, const Tensor<T>& img) {
  require_rgb("enh_generator_forward", img.shape());
  const Shape& s = img.shape();
  if (s.h() % spec.scale != 0 || s.w() % spec.scale != 0) {
    throw ShapeError("enh_generator_forward: H x W = " + std::to_string(s.h()) + "x" +
                     std::to_string(s.w()) + " not divisible by " + std::to_string(spec.scale));
  }
  auto ai = sfe_forward(tape, params, spec, img);
  auto head = conv(tape, params, "head", img);
  auto packed = ops::space_to_depth(tape, head, spec.scale);
  auto f = conv(tape, params, "down", packed);
  Tensor<T> guide;
  if (spec.use_spade) guide = conv(tape, params, "guide", packed);
  for (int b = 0; b < spec.num_blocks; ++b) {
    f = dense_modulation_block(tape, params, "blocks." + std::to_string(b), spec, f, ai);
    if (spade_after(spec, b)) {
      f = spade_layer(tape, params, "spade." + std::to_string(b), spec, f, guide);
    }
  }
  auto out = upsample_tail(tape, params, spec, f);
  if (spec.global_skip) out = ops::add(tape, out, img);
  return out;
}

template <typename T>
Tensor<T> generator_forward(Tape<T>& tape, const ParamStore<T>& params, const ModelSpec& spec,
                            const Tensor<T>& img) {
  return spec.mode == Mode::SuperResolution ? sr_generator_forward(tape, params, spec, img)
                                            : enh_generator_forward(tape, params, spec, img);
}

template <typename T>
Tensor<T> critic_forward(Tape<T>& tape, const ParamStore<T>& params, const Tensor<T>& img) {
  require_rgb("critic_forward", img.shape());
  if (img.shape().h() < 16 || img.shape().w() < 16) {
    throw ShapeError("critic_forward: input " + img.shape().str() +
                     " smaller than the 16x16 receptive field of four stride-2 stages");
  }
  Tensor<T> f = img;
  for (int i = 1; i <= 4; ++i) {
    f = lrelu(tape, conv(tape, params, "critic.conv" + std::to_string(i), f, 2), kCriticSlope);
  }
  return conv(tape, params, "critic.score", f);
}

Tensorf clamp_unit(const Tensorf& x) {
  auto out = x.clone();
  out.set_requires_grad(false);
  for (float& v : out.data()) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

Tensorf infer(const ParamStore<float>& params, const ModelSpec& spec, const Tensorf& img,
              ConvAlgo algo) {
  Tape<float> tape(false, algo);
  return clamp_unit(generator_forward(tape, params, spec, img));
}

#define DMNET_INSTANTIATE_MODEL(T)                                                              \
  template Tensor<T> modulate(Tape<T>&, const Tensor<T>&, const ModulationParams<T>&);          \
  template ModulationParams<T> modulation_layer(Tape<T>&, const ParamStore<T>&,                 \
                                                std::string_view, const ModelSpec&,              \
                                                const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> sfe_forward(Tape<T>&, const ParamStore<T>&, const ModelSpec&,              \
                                 const Tensor<T>&);                                             \
  template Tensor<T> dense_modulation_block(Tape<T>&, const ParamStore<T>&, std::string_view,   \
                                            const ModelSpec&, const Tensor<T>&,                 \
                                            const Tensor<T>&);                                  \
  template Tensor<T> spade_layer(Tape<T>&, const ParamStore<T>&, std::string_view,              \
                                 const ModelSpec&, const Tensor<T>&, const Tensor<T>&);         \
  template Tensor<T> sr_generator_forward(Tape<T>&, const ParamStore<T>&, const ModelSpec&,     \
                                          const Tensor<T>&);                                    \
  template Tensor<T> enh_generator_forward(Tape<T>&, const ParamStore<T>&, const ModelSpec&,    \
                                           const Tensor<T>&);                                   \
  template Tensor<T> generator_forward(Tape<T>&, const ParamStore<T>&, const ModelSpec&,        \
                                       const Tensor<T>&);                                       \
  template Tensor<T> critic_forward(Tape<T>&, const ParamStore<T>&, const Tensor<T>&);

DMNET_INSTANTIATE_MODEL(float)
DMNET_INSTANTIATE_MODEL(double)

}  // namespace dmnet
