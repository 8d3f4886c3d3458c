#include "dmnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dmnet::ops {
namespace {

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  static constexpr const char* kNames[4] = {"N", "C", "H", "W"};
  for (int d = 0; d < 4; ++d) {
    if (sa.dims[d] != sb.dims[d]) {
      throw ShapeError(std::string(op) + ": dimension " + kNames[d] + " differs (" +
                       sa.str() + " vs " + sb.str() + ")");
    }
  }
}

// Adds g[i] * scale_i into t's gradient when t participates in autograd.
template <typename T, typename F>
void accumulate(Tensor<T>& t, F&& contribution) {
  if (!t.requires_grad()) return;
  auto g = t.grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += contribution(i);
}

}  // namespace

template <typename T>
Tensor<T> leaky_relu(Tape<T>& tape, const Tensor<T>& x, T slope) {
  if (slope < T(0)) throw std::invalid_argument("leaky_relu: slope must be >= 0");
  auto out = Tensor<T>::zeros(x.shape());
  auto xv = x.data();
  auto yv = out.data();
  for (std::size_t i = 0; i < xv.size(); ++i) yv[i] = xv[i] >= T(0) ? xv[i] : slope * xv[i];
  if (tape.wants(x)) {
    tape.record(out, [x = x, out, slope]() mutable {
      auto dy = out.grad();
      auto xv = x.data();
      accumulate(x, [&](std::size_t i) { return xv[i] >= T(0) ? dy[i] : slope * dy[i]; });
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat_channels(Tape<T>& tape, std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape& s0 = parts[0].shape();
  int channels = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.n() != s0.n()) throw ShapeError("concat_channels: dimension N differs (" + s.str() + " vs " + s0.str() + ")");
    if (s.h() != s0.h()) throw ShapeError("concat_channels: dimension H differs (" + s.str() + " vs " + s0.str() + ")");
    if (s.w() != s0.w()) throw ShapeError("concat_channels: dimension W differs (" + s.str() + " vs " + s0.str() + ")");
    channels += s.c();
  }
  const std::size_t plane = static_cast<std::size_t>(s0.h()) * s0.w();
  auto out = Tensor<T>::zeros(Shape(s0.n(), channels, s0.h(), s0.w()));
  T* dst = out.ptr();
  for (int n = 0; n < s0.n(); ++n) {
    for (const auto& p : parts) {
      const std::size_t chunk = plane * p.shape().c();
      const T* src = p.ptr() + chunk * n;
      dst = std::copy(src, src + chunk, dst);
    }
  }
  if (tape.wants_any(parts)) {
    std::vector<Tensor<T>> held(parts.begin(), parts.end());
    tape.record(out, [held, out, plane]() mutable {
      const T* g = out.grad().data();
      const int batch = out.shape().n();
      for (int n = 0; n < batch; ++n) {
        for (auto& p : held) {
          const std::size_t chunk = plane * p.shape().c();
          if (p.requires_grad()) {
            T* pg = p.grad_buffer().data() + chunk * n;
            for (std::size_t i = 0; i < chunk; ++i) pg[i] += g[i];
          }
          g += chunk;
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> slice_channels(Tape<T>& tape, const Tensor<T>& x, int begin, int end) {
  const Shape& s = x.shape();
  if (begin < 0 || end > s.c() || begin >= end) {
    throw ShapeError("slice_channels: range [" + std::to_string(begin) + "," +
                     std::to_string(end) + ") invalid for C = " + std::to_string(s.c()));
  }
  const std::size_t plane = static_cast<std::size_t>(s.h()) * s.w();
  const int width = end - begin;
  auto out = Tensor<T>::zeros(Shape(s.n(), width, s.h(), s.w()));
  for (int n = 0; n < s.n(); ++n) {
    const T* src = x.ptr() + (static_cast<std::size_t>(n) * s.c() + begin) * plane;
    std::copy(src, src + plane * width, out.ptr() + static_cast<std::size_t>(n) * width * plane);
  }
  if (tape.wants(x)) {
    tape.record(out, [x = x, out, begin, width, plane]() mutable {
      const Shape& s = x.shape();
      auto g = out.grad();
      T* dx = x.grad_buffer().data();
      for (int n = 0; n < s.n(); ++n) {
        T* dst = dx + (static_cast<std::size_t>(n) * s.c() + begin) * plane;
        const T* src = g.data() + static_cast<std::size_t>(n) * width * plane;
        for (std::size_t i = 0; i < plane * width; ++i) dst[i] += src[i];
      }
    });
  }
  return out;
}

namespace {

// Visits (shuffled index, packed index) pairs of the pixel_shuffle mapping.
template <typename F>
void for_each_shuffle_pair(const Shape& packed, int r, F&& fn) {
  const int oc = packed.c() / (r * r);
  const int oh = packed.h() * r;
  const int ow = packed.w() * r;
  for (int n = 0; n < packed.n(); ++n)
    for (int c = 0; c < oc; ++c)
      for (int h = 0; h < packed.h(); ++h)
        for (int a = 0; a < r; ++a)
          for (int w = 0; w < packed.w(); ++w)
            for (int b = 0; b < r; ++b) {
              const std::size_t big =
                  ((static_cast<std::size_t>(n) * oc + c) * oh + (h * r + a)) * ow + (w * r + b);
              const std::size_t small =
                  ((static_cast<std::size_t>(n) * packed.c() + (c * r * r + a * r + b)) *
                       packed.h() + h) * packed.w() + w;
              fn(big, small);
            }
}

}  // namespace

template <typename T>
Tensor<T> pixel_shuffle(Tape<T>& tape, const Tensor<T>& x, int r) {
  const Shape& s = x.shape();
  if (r <= 0 || s.c() % (r * r) != 0) {
    throw ShapeError("pixel_shuffle: C = " + std::to_string(s.c()) +
                     " not divisible by r^2 = " + std::to_string(r * r));
  }
  auto out = Tensor<T>::zeros(Shape(s.n(), s.c() / (r * r), s.h() * r, s.w() * r));
  const T* src = x.ptr();
  T* dst = out.ptr();
  for_each_shuffle_pair(s, r, [&](std::size_t big, std::size_t small) { dst[big] = src[small]; });
  if (tape.wants(x)) {
    tape.record(out, [x = x, out, r]() mutable {
      const T* g = out.grad().data();
      T* dx = x.grad_buffer().data();
      for_each_shuffle_pair(x.shape(), r, [&](std::size_t big, std::size_t small) { dx[small] += g[big]; });
    });
  }
  return out;
}

template <typename T>
Tensor<T> space_to_depth(Tape<T>& tape, const Tensor<T>& x, int r) {
  const Shape& s = x.shape();
  if (r <= 0 || s.h() % r != 0 || s.w() % r != 0) {
    throw ShapeError("space_to_depth: H x W = " + std::to_string(s.h()) + "x" +
                     std::to_string(s.w()) + " not divisible by r = " + std::to_string(r));
  }
  const Shape packed(s.n(), s.c() * r * r, s.h() / r, s.w() / r);
  auto out = Tensor<T>::zeros(packed);
  const T* src = x.ptr();
  T* dst = out.ptr();
  for_each_shuffle_pair(packed, r, [&](std::size_t big, std::size_t small) { dst[small] = src[big]; });
  if (tape.wants(x)) {
    tape.record(out, [x = x, out, r]() mutable {
      const T* g = out.grad().data();
      T* dx = x.grad_buffer().data();
      for_each_shuffle_pair(out.shape(), r, [&](std::size_t big, std::size_t small) { dx[big] += g[small]; });
    });
  }
  return out;
}

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("add", a, b);
  auto out = Tensor<T>::zeros(a.shape());
  auto av = a.data(), bv = b.data();
  auto y = out.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
  if (tape.wants(a, b)) {
    tape.record(out, [a = a, b = b, out]() mutable {
      auto g = out.grad();
      accumulate(a, [&](std::size_t i) { return g[i]; });
      accumulate(b, [&](std::size_t i) { return g[i]; });
    });
  }
  return out;
}

template <typename T>
Tensor<T> sub(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("sub", a, b);
  auto out = Tensor<T>::zeros(a.shape());
  auto av = a.data(), bv = b.data();
  auto y = out.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] - bv[i];
  if (tape.wants(a, b)) {
    tape.record(out, [a = a, b = b, out]() mutable {
      auto g = out.grad();
      accumulate(a, [&](std::size_t i) { return g[i]; });
      accumulate(b, [&](std::size_t i) { return -g[i]; });
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("mul", a, b);
  auto out = Tensor<T>::zeros(a.shape());
  auto av = a.data(), bv = b.data();
  auto y = out.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
  if (tape.wants(a, b)) {
    tape.record(out, [a = a, b = b, out]() mutable {
      auto g = out.grad();
      auto av = a.data(), bv = b.data();
      accumulate(a, [&](std::size_t i) { return g[i] * bv[i]; });
      accumulate(b, [&](std::size_t i) { return g[i] * av[i]; });
    });
  }
  return out;
}

template <typename T>
Tensor<T> div(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("div", a, b);
  auto out = Tensor<T>::zeros(a.shape());
  auto av = a.data(), bv = b.data();
  auto y = out.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] / bv[i];
  if (tape.wants(a, b)) {
    tape.record(out, [a = a, b = b, out]() mutable {
      auto g = out.grad();
      auto bv = b.data();
      auto yv = out.data();
      accumulate(a, [&](std::size_t i) { return g[i] / bv[i]; });
      accumulate(b, [&](std::size_t i) { return -g[i] * yv[i] / bv[i]; });
    });
  }
  return out;
}

template <typename T>
Tensor<T> scalar_affine(Tape<T>& tape, const Tensor<T>& x, T scale, T shift) {
  auto out = Tensor<T>::zeros(x.shape());
  auto xv = x.data();
  auto y = out.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = scale * xv[i] + shift;
  if (tape.wants(x)) {
    tape.record(out, [x = x, out, scale]() mutable {
      auto g = out.grad();
      accumulate(x, [&](std::size_t i) { return scale * g[i]; });
    });
  }
  return out;
}

template <typename T>
Tensor<T> sub_scalar(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& s) {
  if (s.shape() != kScalarShape) {
    throw ShapeError("sub_scalar: subtrahend must be [1,1,1,1], got " + s.shape().str());
  }
  const T sv = s.item();
  auto out = Tensor<T>::zeros(x.shape());
  auto xv = x.data();
  auto y = out.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] - sv;
  if (tape.wants(x, s)) {
    tape.record(out, [x = x, s = s, out]() mutable {
      auto g = out.grad();
      accumulate(x, [&](std::size_t i) { return g[i]; });
      if (s.requires_grad()) {
        double total = 0;
        for (T v : g) total += v;
        s.grad_buffer()[0] -= static_cast<T>(total);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean_all(Tape<T>& tape, const Tensor<T>& x) {
  const std::size_t count = x.numel();
  if (count == 0) throw ShapeError("mean_all: empty tensor");
  double total = 0;
  for (T v : x.data()) total += v;
  auto out = Tensor<T>::scalar(static_cast<T>(total / static_cast<double>(count)));
  if (tape.wants(x)) {
    tape.record(out, [x = x, out, count]() mutable {
      const T g = out.grad()[0] / static_cast<T>(count);
      accumulate(x, [&](std::size_t) { return g; });
    });
  }
  return out;
}

template <typename T>
Tensor<T> abs(Tape<T>& tape, const Tensor<T>& x) {
  auto out = Tensor<T>::zeros(x.shape());
  auto xv = x.data();
  auto y = out.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::abs(xv[i]);
  if (tape.wants(x)) {
    tape.record(out, [x = x, out]() mutable {
      auto g = out.grad();
      auto xv = x.data();
      accumulate(x, [&](std::size_t i) {
        return xv[i] > T(0) ? g[i] : (xv[i] < T(0) ? -g[i] : T(0));
      });
    });
  }
  return out;
}

template <typename T>
Tensor<T> softplus(Tape<T>& tape, const Tensor<T>& x) {
  auto out = Tensor<T>::zeros(x.shape());
  auto xv = x.data();
  auto y = out.data();
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = std::max(xv[i], T(0)) + std::log1p(std::exp(-std::abs(xv[i])));
  }
  if (tape.wants(x)) {
    tape.record(out, [x = x, out]() mutable {
      auto g = out.grad();
      auto xv = x.data();
      accumulate(x, [&](std::size_t i) {
        // logistic(x), split by sign so exp never overflows
        const T e = std::exp(-std::abs(xv[i]));
        const T sig = xv[i] >= T(0) ? T(1) / (T(1) + e) : e / (T(1) + e);
        return g[i] * sig;
      });
    });
  }
  return out;
}

template <typename T>
Tensor<T> reshape(Tape<T>& tape, const Tensor<T>& x, const Shape& shape) {
  if (shape.numel() != x.numel()) {
    throw ShapeError("reshape: " + x.shape().str() + " has " + std::to_string(x.numel()) +
                     " elements, target " + shape.str() + " has " + std::to_string(shape.numel()));
  }
  auto out = Tensor<T>::from_vector(shape, std::vector<T>(x.data().begin(), x.data().end()));
  if (tape.wants(x)) {
    tape.record(out, [x = x, out]() mutable {
      auto g = out.grad();
      accumulate(x, [&](std::size_t i) { return g[i]; });
    });
  }
  return out;
}

template <typename T>
Tensor<T> instance_norm(Tape<T>& tape, const Tensor<T>& x, T eps) {
  const Shape& s = x.shape();
  const std::size_t plane = static_cast<std::size_t>(s.h()) * s.w();
  const std::size_t groups = static_cast<std::size_t>(s.n()) * s.c();
  auto out = Tensor<T>::zeros(s);
  std::vector<T> inv_std(groups);
  const T* xp = x.ptr();
  T* yp = out.ptr();
  for (std::size_t gi = 0; gi < groups; ++gi) {
    const T* xs = xp + gi * plane;
    double mean = 0;
    for (std::size_t i = 0; i < plane; ++i) mean += xs[i];
    mean /= static_cast<double>(plane);
    double var = 0;
    for (std::size_t i = 0; i < plane; ++i) {
      const double d = xs[i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(plane);
    const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
    inv_std[gi] = static_cast<T>(inv);
    for (std::size_t i = 0; i < plane; ++i) {
      yp[gi * plane + i] = static_cast<T>((xs[i] - mean) * inv);
    }
  }
  if (tape.wants(x)) {
    tape.record(out, [x = x, out, inv_std = std::move(inv_std), plane, groups]() mutable {
      const T* g = out.grad().data();
      const T* xhat = out.ptr();
      T* dx = x.grad_buffer().data();
      for (std::size_t gi = 0; gi < groups; ++gi) {
        const std::size_t o = gi * plane;
        double mean_g = 0, mean_gx = 0;
        for (std::size_t i = 0; i < plane; ++i) {
          mean_g += g[o + i];
          mean_gx += static_cast<double>(g[o + i]) * xhat[o + i];
        }
        mean_g /= static_cast<double>(plane);
        mean_gx /= static_cast<double>(plane);
        for (std::size_t i = 0; i < plane; ++i) {
          dx[o + i] += static_cast<T>(inv_std[gi] * (g[o + i] - mean_g - xhat[o + i] * mean_gx));
        }
      }
    });
  }
  return out;
}

#define DMNET_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> leaky_relu(Tape<T>&, const Tensor<T>&, T);                               \
  template Tensor<T> concat_channels(Tape<T>&, std::span<const Tensor<T>>);                   \
  template Tensor<T> slice_channels(Tape<T>&, const Tensor<T>&, int, int);                    \
  template Tensor<T> pixel_shuffle(Tape<T>&, const Tensor<T>&, int);                          \
  template Tensor<T> space_to_depth(Tape<T>&, const Tensor<T>&, int);                         \
  template Tensor<T> add(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> sub(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> mul(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> div(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> scalar_affine(Tape<T>&, const Tensor<T>&, T, T);                         \
  template Tensor<T> sub_scalar(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> mean_all(Tape<T>&, const Tensor<T>&);                                    \
  template Tensor<T> abs(Tape<T>&, const Tensor<T>&);                                         \
  template Tensor<T> softplus(Tape<T>&, const Tensor<T>&);                                    \
  template Tensor<T> reshape(Tape<T>&, const Tensor<T>&, const Shape&);                       \
  template Tensor<T> instance_norm(Tape<T>&, const Tensor<T>&, T);

DMNET_INSTANTIATE_OPS(float)
DMNET_INSTANTIATE_OPS(double)

}  // namespace dmnet::ops
