#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dmnet {

/// Raised when operand shapes disagree; the message names the offending dimension.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// [N, C, H, W] extent of a tensor.
struct Shape {
  std::array<int, 4> dims{0, 0, 0, 0};

  constexpr Shape() = default;
  constexpr Shape(int n, int c, int h, int w) : dims{n, c, h, w} {}

  constexpr int n() const { return dims[0]; }
  constexpr int c() const { return dims[1]; }
  constexpr int h() const { return dims[2]; }
  constexpr int w() const { return dims[3]; }
  constexpr std::size_t numel() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2] * dims[3];
  }
  constexpr bool operator==(const Shape&) const = default;

  std::string str() const;
};

inline constexpr Shape kScalarShape{1, 1, 1, 1};

template <typename T>
struct TensorStorage {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
};

/// Shared handle to a 4-D [N,C,H,W] row-major buffer with an optional gradient.
///
/// Copies alias the same storage (like a reference-counted array); use
/// clone() for a detached deep copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, T value, bool requires_grad = false);
  static Tensor from_vector(const Shape& shape, std::vector<T> values,
                            bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(impl_); }
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  const Shape& shape() const { return impl_->shape; }
  std::size_t numel() const { return impl_->shape.numel(); }

  std::span<T> data() { return impl_->data; }
  std::span<const T> data() const { return impl_->data; }
  T* ptr() { return impl_->data.data(); }
  const T* ptr() const { return impl_->data.data(); }

  T& at(int n, int c, int h, int w) { return impl_->data[offset(n, c, h, w)]; }
  T at(int n, int c, int h, int w) const { return impl_->data[offset(n, c, h, w)]; }
  /// Value of a [1,1,1,1] tensor.
  T item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    impl_->requires_grad = on;
    return *this;
  }

  bool has_grad() const { return !impl_->grad.empty(); }
  /// Allocates a zero gradient if none is present.
  std::span<T> grad_buffer();
  std::span<const T> grad() const { return impl_->grad; }
  void zero_grad();
  void drop_grad() { impl_->grad.clear(); }

  Tensor clone() const;

  std::size_t offset(int n, int c, int h, int w) const {
    const Shape& s = impl_->shape;
    return ((static_cast<std::size_t>(n) * s.c() + c) * s.h() + h) * s.w() + w;
  }

 private:
  std::shared_ptr<TensorStorage<T>> impl_;
};

/// How conv2d evaluates. Direct loops are the reference; Im2col is the faster
/// GEMM formulation and must agree with Direct to 1e-5 relative.
enum class ConvAlgo { Direct, Im2col };

/// Records differentiable operations in execution order.
///
/// A disabled tape records nothing, which is how inference runs.
template <typename T>
class Tape {
 public:
  explicit Tape(bool enabled = true, ConvAlgo algo = ConvAlgo::Direct)
      : enabled_(enabled), conv_algo_(algo) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  bool enabled() const { return enabled_; }
  ConvAlgo conv_algo() const { return conv_algo_; }
  void set_conv_algo(ConvAlgo algo) { conv_algo_ = algo; }

  /// True when an op with these inputs must be recorded.
  template <typename... Ts>
  bool wants(const Ts&... inputs) const {
    return enabled_ && (inputs.requires_grad() || ...);
  }
  bool wants_any(std::span<const Tensor<T>> inputs) const;

  void record(Tensor<T> output, std::function<void()> backward_rule);
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  /// Seeds d(loss)/d(loss) = 1 and replays the rules in reverse order.
  void backward(Tensor<T>& loss);

 private:
  struct Node {
    Tensor<T> output;
    std::function<void()> rule;
  };
  std::vector<Node> nodes_;
  bool enabled_;
  ConvAlgo conv_algo_;
};

/// Accumulates dLoss/dX into every requires_grad leaf reachable on the tape.
/// Leaf gradients accumulate across calls; zero them explicitly between steps.
template <typename T>
void backward(Tensor<T>& loss, Tape<T>& tape) {
  tape.backward(loss);
}

/// Element-type conversion (float <-> double), detached, keeps requires_grad.
template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& src) {
  std::vector<To> values(src.data().begin(), src.data().end());
  return Tensor<To>::from_vector(src.shape(), std::move(values), src.requires_grad());
}

bool all_finite(std::span<const float> values);
bool all_finite(std::span<const double> values);

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

}  // namespace dmnet
