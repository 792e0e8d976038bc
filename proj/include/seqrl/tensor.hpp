#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace seqrl {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Checked mode guards every op output against NaN/Inf and is on by default.
void set_checked(bool enabled);
bool checked();

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool has_grad = false;
  bool requires_grad = false;
  bool consumed = false;
  std::uint64_t id = 0;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  std::vector<double>& ensure_grad() {
    if (!has_grad) {
      grad.assign(value.size(), 0.0);
      has_grad = true;
    }
    return grad;
  }
  bool is_leaf() const { return !backward_fn; }
};

std::uint64_t next_node_id();

}  // namespace detail

/// n-dimensional row-major array of doubles participating in reverse-mode
/// autodiff. Copies share the underlying node, like a handle.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double value, bool requires_grad = false);

  /// Builds an op result. Records `inputs` and `backward_fn` only when
  /// recording is enabled and some input requires a gradient; validates
  /// finiteness in checked mode.
  static Tensor make_result(const char* op, Shape shape, std::vector<double> value,
                            std::vector<Tensor> inputs, std::function<void(detail::Node&)> backward_fn);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  /// Mutable view of the values. Only meaningful for leaves (parameters,
  /// inputs); mutating a recorded intermediate invalidates its graph.
  std::span<double> data_mut();
  double item() const;
  double at(std::size_t flat_index) const { return data()[flat_index]; }

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> grad_mut();
  void zero_grad();

  /// Reverse-mode accumulation from this scalar into every reachable tensor
  /// that requires a gradient. The graph is released afterwards; calling it
  /// again on the same root is a StateError.
  void backward() const;

  /// New leaf holding a copy of the values, outside any graph.
  Tensor detach() const;
  Tensor clone(bool requires_grad) const;

  std::uint64_t id() const;
  detail::Node& node() const { return *node_; }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::Node> node_;
};

}  // namespace seqrl
