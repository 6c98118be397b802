#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fainr/error.hpp"

namespace fainr::ad {

// Dense row-major storage. Every tensor in the model is rank 2; vectors are
// 1×n (row) or n×1 (column) matrices.
template <class T>
using Tensor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Shape = std::vector<std::size_t>;

template <class T>
Shape shape_of(const Tensor<T>& t) {
  return {static_cast<std::size_t>(t.rows()), static_cast<std::size_t>(t.cols())};
}

inline std::string shape_string(Eigen::Index rows, Eigen::Index cols) {
  return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

template <class T>
std::string shape_string(const Tensor<T>& t) {
  return shape_string(t.rows(), t.cols());
}

template <class T>
bool all_finite(const Tensor<T>& t) {
  return t.array().isFinite().all();
}

// Named learnable tensors in insertion order.
template <class T>
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
  };

  std::size_t add(std::string name, Tensor<T> value) {
    FAINR_REQUIRE(!index_.contains(name), ContractError,
                  "duplicate parameter name '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.push_back({std::move(name), std::move(value)});
    return entries_.size() - 1;
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  const Entry& operator[](std::size_t i) const { return entries_[i]; }
  Entry& operator[](std::size_t i) { return entries_[i]; }

  const Tensor<T>& value(std::size_t i) const { return entries_[i].value; }
  Tensor<T>& value(std::size_t i) { return entries_[i].value; }
  const std::string& name(std::size_t i) const { return entries_[i].name; }

  bool contains(const std::string& name) const { return index_.contains(name); }

  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    FAINR_REQUIRE(it != index_.end(), ContractError, "unknown parameter '" + name + "'");
    return it->second;
  }

  // Total number of scalars.
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += static_cast<std::size_t>(e.value.size());
    return n;
  }

  template <class U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& e : entries_) out.add(e.name, e.value.template cast<U>());
    return out;
  }

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Gradients aligned with a ParameterSet's order.
template <class T>
using GradientMap = std::vector<Tensor<T>>;

}  // namespace fainr::ad
