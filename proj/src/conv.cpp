#include <algorithm>
#include <string>
#include <vector>

#include "dmnet/ops.hpp"

namespace dmnet::ops {
namespace {

// Eight independent partial sums so the compiler can vectorise without
// reassociating a single accumulator.
template <typename T>
T dot(const T* a, const T* b, int n) {
  T acc[8] = {};
  int i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
  }
  T tail = 0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

template <typename T>
void axpy(T alpha, const T* x, T* y, int n) {
  for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

struct ConvGeom {
  int n, cin, h, w;
  int cout, kh, kw;
  int stride, pad;
  int oh, ow;
};

// Output columns [lo, hi) whose tap at kernel column kx lands inside the input.
inline void valid_range(int kx, int stride, int pad, int in_extent, int out_extent, int& lo,
                        int& hi) {
  // need 0 <= o*stride + kx - pad < in_extent
  lo = 0;
  while (lo < out_extent && lo * stride + kx - pad < 0) ++lo;
  hi = out_extent;
  while (hi > lo && (hi - 1) * stride + kx - pad >= in_extent) --hi;
}

template <typename T>
void direct_forward(const ConvGeom& g, const T* x, const T* wt, const T* b, T* y) {
  const std::size_t in_plane = static_cast<std::size_t>(g.h) * g.w;
  const std::size_t out_plane = static_cast<std::size_t>(g.oh) * g.ow;
  for (int n = 0; n < g.n; ++n) {
    for (int co = 0; co < g.cout; ++co) {
      T* yp = y + (static_cast<std::size_t>(n) * g.cout + co) * out_plane;
      std::fill(yp, yp + out_plane, b ? b[co] : T(0));
      for (int ci = 0; ci < g.cin; ++ci) {
        const T* xp = x + (static_cast<std::size_t>(n) * g.cin + ci) * in_plane;
        for (int ky = 0; ky < g.kh; ++ky) {
          for (int kx = 0; kx < g.kw; ++kx) {
            const T wv = wt[((static_cast<std::size_t>(co) * g.cin + ci) * g.kh + ky) * g.kw + kx];
            int lo, hi;
            valid_range(kx, g.stride, g.pad, g.w, g.ow, lo, hi);
            for (int oy = 0; oy < g.oh; ++oy) {
              const int iy = oy * g.stride + ky - g.pad;
              if (iy < 0 || iy >= g.h) continue;
              const T* xr = xp + static_cast<std::size_t>(iy) * g.w + kx - g.pad;
              T* yr = yp + static_cast<std::size_t>(oy) * g.ow;
              if (g.stride == 1) {
                for (int ox = lo; ox < hi; ++ox) yr[ox] += wv * xr[ox];
              } else {
                for (int ox = lo; ox < hi; ++ox) yr[ox] += wv * xr[ox * g.stride];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void direct_backward(const ConvGeom& g, const T* x, const T* wt, const T* dy, T* dx, T* dw,
                     T* db) {
  const std::size_t in_plane = static_cast<std::size_t>(g.h) * g.w;
  const std::size_t out_plane = static_cast<std::size_t>(g.oh) * g.ow;
  for (int n = 0; n < g.n; ++n) {
    for (int co = 0; co < g.cout; ++co) {
      const T* dyp = dy + (static_cast<std::size_t>(n) * g.cout + co) * out_plane;
      if (db) {
        T s = 0;
        for (std::size_t i = 0; i < out_plane; ++i) s += dyp[i];
        db[co] += s;
      }
      for (int ci = 0; ci < g.cin; ++ci) {
        const std::size_t plane_off = (static_cast<std::size_t>(n) * g.cin + ci) * in_plane;
        for (int ky = 0; ky < g.kh; ++ky) {
          for (int kx = 0; kx < g.kw; ++kx) {
            const std::size_t widx =
                ((static_cast<std::size_t>(co) * g.cin + ci) * g.kh + ky) * g.kw + kx;
            const T wv = wt[widx];
            int lo, hi;
            valid_range(kx, g.stride, g.pad, g.w, g.ow, lo, hi);
            T wacc = 0;
            for (int oy = 0; oy < g.oh; ++oy) {
              const int iy = oy * g.stride + ky - g.pad;
              if (iy < 0 || iy >= g.h) continue;
              const std::size_t row = plane_off + static_cast<std::size_t>(iy) * g.w + kx - g.pad;
              const T* dyr = dyp + static_cast<std::size_t>(oy) * g.ow;
              if (g.stride == 1) {
                if (dx) axpy(wv, dyr + lo, dx + row + lo, hi - lo);
                if (dw) wacc += dot(dyr + lo, x + row + lo, hi - lo);
              } else {
                for (int ox = lo; ox < hi; ++ox) {
                  if (dx) dx[row + static_cast<std::size_t>(ox) * g.stride] += wv * dyr[ox];
                  if (dw) wacc += dyr[ox] * x[row + static_cast<std::size_t>(ox) * g.stride];
                }
              }
            }
            if (dw) dw[widx] += wacc;
          }
        }
      }
    }
  }
}

// col is [cin*kh*kw, oh*ow] for one sample.
template <typename T>
void im2col(const ConvGeom& g, const T* x, T* col) {
  const std::size_t out_plane = static_cast<std::size_t>(g.oh) * g.ow;
  std::size_t k = 0;
  for (int ci = 0; ci < g.cin; ++ci) {
    const T* xp = x + static_cast<std::size_t>(ci) * g.h * g.w;
    for (int ky = 0; ky < g.kh; ++ky) {
      for (int kx = 0; kx < g.kw; ++kx, ++k) {
        T* cr = col + k * out_plane;
        std::fill(cr, cr + out_plane, T(0));
        int lo, hi;
        valid_range(kx, g.stride, g.pad, g.w, g.ow, lo, hi);
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * g.stride + ky - g.pad;
          if (iy < 0 || iy >= g.h) continue;
          const T* xr = xp + static_cast<std::size_t>(iy) * g.w + kx - g.pad;
          T* dst = cr + static_cast<std::size_t>(oy) * g.ow;
          for (int ox = lo; ox < hi; ++ox) dst[ox] = xr[ox * g.stride];
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const ConvGeom& g, const T* col, T* dx) {
  const std::size_t out_plane = static_cast<std::size_t>(g.oh) * g.ow;
  std::size_t k = 0;
  for (int ci = 0; ci < g.cin; ++ci) {
    T* xp = dx + static_cast<std::size_t>(ci) * g.h * g.w;
    for (int ky = 0; ky < g.kh; ++ky) {
      for (int kx = 0; kx < g.kw; ++kx, ++k) {
        const T* cr = col + k * out_plane;
        int lo, hi;
        valid_range(kx, g.stride, g.pad, g.w, g.ow, lo, hi);
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * g.stride + ky - g.pad;
          if (iy < 0 || iy >= g.h) continue;
          T* xr = xp + static_cast<std::size_t>(iy) * g.w + kx - g.pad;
          const T* src = cr + static_cast<std::size_t>(oy) * g.ow;
          for (int ox = lo; ox < hi; ++ox) xr[ox * g.stride] += src[ox];
        }
      }
    }
  }
}

template <typename T>
void im2col_forward(const ConvGeom& g, const T* x, const T* wt, const T* b, T* y,
                    std::vector<T>& cols) {
  const int kdim = g.cin * g.kh * g.kw;
  const std::size_t out_plane = static_cast<std::size_t>(g.oh) * g.ow;
  const std::size_t col_size = static_cast<std::size_t>(kdim) * out_plane;
  cols.resize(col_size * g.n);
  for (int n = 0; n < g.n; ++n) {
    T* col = cols.data() + col_size * n;
    im2col(g, x + static_cast<std::size_t>(n) * g.cin * g.h * g.w, col);
    for (int co = 0; co < g.cout; ++co) {
      T* yr = y + (static_cast<std::size_t>(n) * g.cout + co) * out_plane;
      std::fill(yr, yr + out_plane, b ? b[co] : T(0));
      const T* wr = wt + static_cast<std::size_t>(co) * kdim;
      for (int k = 0; k < kdim; ++k) {
        axpy(wr[k], col + static_cast<std::size_t>(k) * out_plane, yr,
             static_cast<int>(out_plane));
      }
    }
  }
}

template <typename T>
void im2col_backward(const ConvGeom& g, const std::vector<T>& cols, const T* wt, const T* dy,
                     T* dx, T* dw, T* db) {
  const int kdim = g.cin * g.kh * g.kw;
  const std::size_t out_plane = static_cast<std::size_t>(g.oh) * g.ow;
  const std::size_t col_size = static_cast<std::size_t>(kdim) * out_plane;
  std::vector<T> dcol(dx ? col_size : 0);
  for (int n = 0; n < g.n; ++n) {
    const T* col = cols.data() + col_size * n;
    const T* dyn = dy + static_cast<std::size_t>(n) * g.cout * out_plane;
    if (dx) std::fill(dcol.begin(), dcol.end(), T(0));
    for (int co = 0; co < g.cout; ++co) {
      const T* dyr = dyn + static_cast<std::size_t>(co) * out_plane;
      if (db) {
        T s = 0;
        for (std::size_t i = 0; i < out_plane; ++i) s += dyr[i];
        db[co] += s;
      }
      const T* wr = wt + static_cast<std::size_t>(co) * kdim;
      for (int k = 0; k < kdim; ++k) {
        const T* cr = col + static_cast<std::size_t>(k) * out_plane;
        if (dw) dw[static_cast<std::size_t>(co) * kdim + k] += dot(dyr, cr, static_cast<int>(out_plane));
        if (dx) axpy(wr[k], dyr, dcol.data() + static_cast<std::size_t>(k) * out_plane, static_cast<int>(out_plane));
      }
    }
    if (dx) col2im_add(g, dcol.data(), dx + static_cast<std::size_t>(n) * g.cin * g.h * g.w);
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias, int stride, int pad) {
  const Shape& xs = input.shape();
  const Shape& ws = weight.shape();
  if (xs.c() != ws.c()) {
    throw ShapeError("conv2d: input channels (dim 1) = " + std::to_string(xs.c()) +
                     " but weight Cin (dim 1) = " + std::to_string(ws.c()));
  }
  if (bias.defined() && bias.shape() != Shape(1, ws.n(), 1, 1)) {
    throw ShapeError("conv2d: bias shape " + bias.shape().str() + " does not match Cout = " +
                     std::to_string(ws.n()));
  }
  if (stride <= 0 || pad < 0) throw ShapeError("conv2d: stride must be > 0 and pad >= 0");
  ConvGeom g{xs.n(), xs.c(), xs.h(), xs.w(), ws.n(), ws.h(), ws.w(), stride, pad, 0, 0};
  const int num_h = xs.h() + 2 * pad - ws.h();
  const int num_w = xs.w() + 2 * pad - ws.w();
  if (num_h < 0 || num_w < 0) {
    throw ShapeError("conv2d: non-positive output size for input " + xs.str() + " and kernel " +
                     ws.str());
  }
  g.oh = num_h / stride + 1;
  g.ow = num_w / stride + 1;

  auto out = Tensor<T>::zeros(Shape(g.n, g.cout, g.oh, g.ow));
  const T* bp = bias.defined() ? bias.ptr() : nullptr;
  const ConvAlgo algo = tape.conv_algo();
  std::vector<T> cols;
  if (algo == ConvAlgo::Im2col) {
    im2col_forward(g, input.ptr(), weight.ptr(), bp, out.ptr(), cols);
  } else {
    direct_forward(g, input.ptr(), weight.ptr(), bp, out.ptr());
  }

  const bool with_bias = bias.defined();
  if (with_bias ? tape.wants(input, weight, bias) : tape.wants(input, weight)) {
    tape.record(out, [g, algo, input = input, weight = weight, bias = bias, out, cols = std::move(cols)]() mutable {
      const T* dy = out.grad().data();
      T* dx = input.requires_grad() ? input.grad_buffer().data() : nullptr;
      T* dw = weight.requires_grad() ? weight.grad_buffer().data() : nullptr;
      T* db = (bias.defined() && bias.requires_grad()) ? bias.grad_buffer().data() : nullptr;
      if (algo == ConvAlgo::Im2col) {
        im2col_backward(g, cols, weight.ptr(), dy, dx, dw, db);
      } else {
        direct_backward(g, input.ptr(), weight.ptr(), dy, dx, dw, db);
      }
    });
  }
  return out;
}

template Tensor<float> conv2d(Tape<float>&, const Tensor<float>&, const Tensor<float>&,
                              const Tensor<float>&, int, int);
template Tensor<double> conv2d(Tape<double>&, const Tensor<double>&, const Tensor<double>&,
                               const Tensor<double>&, int, int);

}  // namespace dmnet::ops
