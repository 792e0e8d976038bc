#include "seqrl/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_map>

#include "seqrl/error.hpp"

namespace seqrl {

namespace {

std::atomic<bool> g_checked{true};
thread_local bool t_grad_enabled = true;

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

void set_checked(bool enabled) { g_checked.store(enabled); }
bool checked() { return g_checked.load(); }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_enabled() { return t_grad_enabled; }

namespace detail {

std::uint64_t next_node_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1);
}

}  // namespace detail

Tensor::Tensor(Shape shape, double fill, bool requires_grad) {
  auto node = std::make_shared<detail::Node>();
  node->value.assign(shape_numel(shape), fill);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  node->id = detail::next_node_id();
  node_ = std::move(node);
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  node->id = detail::next_node_id();
  node_ = std::move(node);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor(Shape{}, {value}, requires_grad); }

Tensor Tensor::make_result(const char* op, Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                           std::function<void(detail::Node&)> backward_fn) {
  if (checked()) {
    for (double v : value) {
      if (!std::isfinite(v)) throw NumericError(std::string(op) + " produced a non-finite value");
    }
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->id = detail::next_node_id();
  bool track = false;
  if (t_grad_enabled) {
    for (const auto& in : inputs) track = track || (in.defined() && in.node_->requires_grad);
  }
  if (track) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(std::move(in.node_));
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::size(std::size_t axis) const {
  if (axis >= rank()) throw IndexError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
  return node_->shape[axis];
}

std::size_t Tensor::numel() const { return node_->value.size(); }
std::span<const double> Tensor::data() const { return node_->value; }
std::span<double> Tensor::data_mut() { return node_->value; }

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

void Tensor::set_requires_grad(bool value) {
  if (!is_leaf()) throw StateError("requires_grad can only be changed on leaf tensors");
  node_->requires_grad = value;
}

bool Tensor::is_leaf() const { return node_->is_leaf(); }
bool Tensor::has_grad() const { return node_->has_grad; }
std::span<const double> Tensor::grad() const { return node_->grad; }
std::span<double> Tensor::grad_mut() { return node_->ensure_grad(); }

void Tensor::zero_grad() {
  node_->grad.clear();
  node_->has_grad = false;
}

void Tensor::backward() const {
  if (numel() != 1) throw DimensionError("backward() requires a scalar loss, got " + shape_str(shape()));
  if (node_->consumed) throw StateError("backward() already ran on this graph");
  if (!node_->requires_grad) throw StateError("loss does not depend on any tensor that requires a gradient");

  // Iterative post-order DFS. A node met again while still on the stack
  // closes a cycle.
  enum class Mark : std::uint8_t { Active, Done };
  std::unordered_map<const detail::Node*, Mark> marks;
  std::vector<detail::Node*> order;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  marks[node_.get()] = Mark::Active;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].get();
      if (!child->requires_grad) continue;
      auto it = marks.find(child);
      if (it == marks.end()) {
        marks.emplace(child, Mark::Active);
        stack.emplace_back(child, 0);
      } else if (it->second == Mark::Active) {
        throw StateError("cycle detected in computation graph");
      }
    } else {
      marks[node] = Mark::Done;
      order.push_back(node);
      stack.pop_back();
    }
  }

  node_->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->backward_fn && node->has_grad) node->backward_fn(*node);
  }
  if (checked()) {
    for (auto* node : order) {
      for (double g : node->grad) {
        if (!std::isfinite(g)) throw NumericError("backward produced a non-finite gradient");
      }
    }
  }
  // Release the graph: intermediates drop their inputs and closures.
  for (auto* node : order) {
    if (node->backward_fn) {
      node->inputs.clear();
      node->backward_fn = nullptr;
      node->consumed = true;
    }
  }
  node_->consumed = true;
}

Tensor Tensor::detach() const { return clone(false); }

Tensor Tensor::clone(bool requires_grad) const { return Tensor(node_->shape, node_->value, requires_grad); }

std::uint64_t Tensor::id() const { return node_->id; }

}  // namespace seqrl
