#include "dmnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dmnet {

std::string Shape::str() const {
  std::ostringstream os;
  os << '[' << dims[0] << ',' << dims[1] << ',' << dims[2] << ',' << dims[3] << ']';
  return os.str();
}

template <typename T>
Tensor<T> Tensor<T>::zeros(const Shape& shape, bool requires_grad) {
  return full(shape, T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(const Shape& shape, T value, bool requires_grad) {
  for (int d : shape.dims) {
    if (d < 0) throw ShapeError("negative dimension in shape " + shape.str());
  }
  Tensor t;
  t.impl_ = std::make_shared<TensorStorage<T>>();
  t.impl_->shape = shape;
  t.impl_->data.assign(shape.numel(), value);
  t.impl_->requires_grad = requires_grad;
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::from_vector(const Shape& shape, std::vector<T> values,
                                 bool requires_grad) {
  if (values.size() != shape.numel()) {
    throw ShapeError("buffer of " + std::to_string(values.size()) +
                     " values does not fill shape " + shape.str());
  }
  Tensor t;
  t.impl_ = std::make_shared<TensorStorage<T>>();
  t.impl_->shape = shape;
  t.impl_->data = std::move(values);
  t.impl_->requires_grad = requires_grad;
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return full(kScalarShape, value, requires_grad);
}

template <typename T>
T Tensor<T>::item() const {
  if (impl_->shape != kScalarShape) {
    throw ShapeError("item() needs a [1,1,1,1] tensor, got " + impl_->shape.str());
  }
  return impl_->data[0];
}

template <typename T>
std::span<T> Tensor<T>::grad_buffer() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T(0));
  return impl_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  Tensor t;
  t.impl_ = std::make_shared<TensorStorage<T>>();
  t.impl_->shape = impl_->shape;
  t.impl_->data = impl_->data;
  t.impl_->requires_grad = impl_->requires_grad;
  return t;
}

template <typename T>
bool Tape<T>::wants_any(std::span<const Tensor<T>> inputs) const {
  if (!enabled_) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor<T>& t) { return t.requires_grad(); });
}

template <typename T>
void Tape<T>::record(Tensor<T> output, std::function<void()> backward_rule) {
  output.set_requires_grad(true);
  nodes_.push_back({std::move(output), std::move(backward_rule)});
}

template <typename T>
void Tape<T>::backward(Tensor<T>& loss) {
  if (loss.shape() != kScalarShape) {
    throw ShapeError("backward needs a scalar [1,1,1,1] loss, got " + loss.shape().str());
  }
  // Intermediate gradients belong to this pass only; leaves keep accumulating.
  for (auto& node : nodes_) node.output.drop_grad();
  loss.grad_buffer()[0] += T(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output.has_grad()) it->rule();
  }
}

bool all_finite(std::span<const float> values) {
  return std::all_of(values.begin(), values.end(), [](float v) { return std::isfinite(v); });
}
bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace dmnet
