#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "vesselforge/error.hpp"
#include "vesselforge/tensor.hpp"

namespace vf {

template <class T>
struct NamedTensor {
  std::string name;
  Tensor<T> value;
  bool operator==(const NamedTensor&) const = default;
};

/// Ordered, named collection of tensors. Used for model weights, their
/// gradients and optimizer moments, which all share one layout.
template <class T>
class ParamSet {
 public:
  void add(std::string name, Tensor<T> value) {
    require(find(name) == nullptr, Errc::InvalidArgument, "duplicate parameter " + name);
    entries_.push_back({std::move(name), std::move(value)});
  }

  const Tensor<T>* find(std::string_view name) const {
    for (const auto& e : entries_)
      if (e.name == name) return &e.value;
    return nullptr;
  }
  Tensor<T>* find(std::string_view name) {
    for (auto& e : entries_)
      if (e.name == name) return &e.value;
    return nullptr;
  }

  const Tensor<T>& get(std::string_view name) const {
    const auto* t = find(name);
    if (!t) fail(Errc::ShapeMismatch, "missing parameter " + std::string(name));
    return *t;
  }
  Tensor<T>& get(std::string_view name) {
    auto* t = find(name);
    if (!t) fail(Errc::ShapeMismatch, "missing parameter " + std::string(name));
    return *t;
  }

  std::size_t size() const { return entries_.size(); }
  std::size_t element_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  NamedTensor<T>& operator[](std::size_t i) { return entries_[i]; }
  const NamedTensor<T>& operator[](std::size_t i) const { return entries_[i]; }

  /// Same names and shapes, all zeros.
  ParamSet zeros_like() const {
    ParamSet out;
    for (const auto& e : entries_) out.entries_.push_back({e.name, Tensor<T>(e.value.shape())});
    return out;
  }

  bool same_layout(const ParamSet& other) const {
    if (size() != other.size()) return false;
    for (std::size_t i = 0; i < size(); ++i)
      if (entries_[i].name != other.entries_[i].name || entries_[i].value.shape() != other.entries_[i].value.shape())
        return false;
    return true;
  }

  template <class U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& e : entries_) out.add(e.name, e.value.template cast<U>());
    return out;
  }

  bool operator==(const ParamSet&) const = default;

 private:
  std::vector<NamedTensor<T>> entries_;
};

}  // namespace vf
