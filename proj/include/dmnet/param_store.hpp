#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dmnet/tensor.hpp"

namespace dmnet {

/// Named learnable tensors in insertion order. Names are hierarchical
/// ("blocks.0.conv1.weight") and unique.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> tensor;
  };

  void add(std::string name, Tensor<T> tensor) {
    if (index_.contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    index_.emplace(name, entries_.size());
    entries_.push_back({std::move(name), std::move(tensor)});
  }

  bool contains(std::string_view name) const { return index_.contains(std::string(name)); }

  const Tensor<T>& get(std::string_view name) const { return entries_[locate(name)].tensor; }
  Tensor<T>& get(std::string_view name) { return entries_[locate(name)].tensor; }

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::size_t total_parameters() const {
    std::size_t total = 0;
    for (const auto& e : entries_) total += e.tensor.numel();
    return total;
  }

  void zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
  }

  void set_requires_grad(bool on) {
    for (auto& e : entries_) e.tensor.set_requires_grad(on);
  }

  /// Deep copy with converted element type.
  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& e : entries_) out.add(e.name, dmnet::cast<U>(e.tensor));
    return out;
  }

  ParamStore clone() const {
    ParamStore out;
    for (const auto& e : entries_) out.add(e.name, e.tensor.clone());
    return out;
  }

 private:
  std::size_t locate(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw std::out_of_range("unknown parameter: " + std::string(name));
    return it->second;
  }

  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace dmnet
