#include "seqrl/params.hpp"

#include <algorithm>
#include <cmath>

#include "seqrl/error.hpp"

namespace seqrl {

namespace init {

Init zeros() { return constant(0.0); }

Init constant(double value) {
  return [value](const Shape& shape, Rng&) { return std::vector<double>(shape_numel(shape), value); };
}

Init xavier_uniform(double gain) {
  return [gain](const Shape& shape, Rng& rng) {
    std::size_t fan_in = shape.empty() ? 1 : shape[0];
    std::size_t fan_out = shape.size() > 1 ? shape[1] : 1;
    std::size_t receptive = 1;
    for (std::size_t i = 2; i < shape.size(); ++i) receptive *= shape[i];
    if (shape.size() == 4) std::swap(fan_in, fan_out);  // conv kernels are [out, in, kh, kw]
    const double bound = gain * std::sqrt(6.0 / static_cast<double>((fan_in + fan_out) * receptive));
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) v = rng.uniform(-bound, bound);
    return values;
  };
}

Init uniform(double bound) {
  return [bound](const Shape& shape, Rng& rng) {
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) v = rng.uniform(-bound, bound);
    return values;
  };
}

}  // namespace init

Tensor ParameterStore::declare(const std::string& name, const Shape& shape, const Init& initializer, Rng& rng) {
  for (const auto& [key, value] : entries_) {
    if (key != name) continue;
    if (value.shape() != shape) {
      throw DimensionError("parameter " + name + " has shape " + shape_str(value.shape()) + ", expected " +
                           shape_str(shape));
    }
    return value;
  }
  Tensor t(shape, initializer(shape, rng), requires_grad_);
  entries_.emplace_back(name, t);
  return t;
}

bool ParameterStore::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
}

const Tensor& ParameterStore::get(const std::string& name) const {
  for (const auto& [key, value] : entries_) {
    if (key == name) return value;
  }
  throw IndexError("no parameter named " + name);
}

std::vector<Tensor> ParameterStore::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.second);
  return out;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.numel();
  return n;
}

void ParameterStore::insert(const std::string& name, Tensor value) {
  if (contains(name)) throw StateError("duplicate parameter " + name);
  value.set_requires_grad(requires_grad_);
  entries_.emplace_back(name, std::move(value));
}

void ParameterStore::zero_grad() {
  for (auto& e : entries_) e.second.zero_grad();
}

ParameterStore ParameterStore::clone(bool requires_grad) const {
  ParameterStore out(requires_grad);
  for (const auto& [name, value] : entries_) out.entries_.emplace_back(name, value.clone(requires_grad));
  return out;
}

void ParameterStore::copy_values_from(const ParameterStore& other) {
  if (other.entries_.size() != entries_.size()) throw DimensionError("parameter stores differ in size");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto& [name, dst] = entries_[i];
    const auto& [other_name, src] = other.entries_[i];
    if (name != other_name || dst.shape() != src.shape()) {
      throw DimensionError("parameter " + name + " does not match " + other_name);
    }
    std::copy(src.data().begin(), src.data().end(), dst.data_mut().begin());
  }
}

}  // namespace seqrl
