#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "seqrl/rng.hpp"
#include "seqrl/tensor.hpp"

namespace seqrl {

/// Initial value generator for a parameter of the given shape.
using Init = std::function<std::vector<double>(const Shape&, Rng&)>;

namespace init {
Init zeros();
Init constant(double value);
/// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)); fans from the
/// first two dims times any receptive field.
Init xavier_uniform(double gain = 1.0);
Init uniform(double bound);
}  // namespace init

/// Ordered, named collection of parameter tensors. Insertion order is the
/// serialization and optimizer order.
class ParameterStore {
 public:
  ParameterStore() = default;
  explicit ParameterStore(bool requires_grad) : requires_grad_(requires_grad) {}

  /// Returns the parameter called `name`, creating it with `initializer` if
  /// the store does not hold it yet. An existing entry must match `shape`.
  Tensor declare(const std::string& name, const Shape& shape, const Init& initializer, Rng& rng);

  bool contains(const std::string& name) const;
  const Tensor& get(const std::string& name) const;
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<Tensor> tensors() const;
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;
  bool requires_grad() const { return requires_grad_; }

  /// Inserts an already built tensor (used by checkpoint loading).
  void insert(const std::string& name, Tensor value);

  void zero_grad();
  /// Deep copy with fresh leaves.
  ParameterStore clone(bool requires_grad) const;
  /// Overwrites values from a store with identical names and shapes.
  void copy_values_from(const ParameterStore& other);

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  bool requires_grad_ = true;
};

}  // namespace seqrl
