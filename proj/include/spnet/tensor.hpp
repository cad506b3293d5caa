#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace spnet {

// Shape or argument mismatch between tensors.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// An operation was called outside its documented domain.
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Storage is always double. In Float32 mode every operation result (and every
// parameter write) is rounded to the nearest float, which reproduces 32-bit
// forward numerics; Float64 is used for gradient checking.
enum class Precision { kFloat32, kFloat64 };

void set_precision(Precision p);
Precision precision();

class PrecisionScope {
 public:
  explicit PrecisionScope(Precision p);
  ~PrecisionScope();
  PrecisionScope(const PrecisionScope&) = delete;
  PrecisionScope& operator=(const PrecisionScope&) = delete;

 private:
  Precision saved_;
};

// Disables graph recording on the current thread.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool saved_;
};

bool grad_enabled();

struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Propagates this node's grad into its inputs' grads.
  std::function<void(Node&)> backward_fn;

  std::vector<double>& ensure_grad();
};

}  // namespace detail

// Dense NCHW tensor. A handle: copies share the same storage and graph node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t numel() const { return shape().numel(); }

  // The span borrows the node's storage, so temporaries must be named first.
  std::span<const double> data() const&;
  std::span<const double> data() const&& = delete;
  // Only valid on leaves; used by optimizers and weight loading.
  std::span<double> mutable_data();
  double at(int n, int c, int h, int w) const;
  double item() const;

  bool requires_grad() const;
  bool has_grad() const;
  std::span<const double> grad() const&;
  std::span<const double> grad() const&& = delete;
  std::span<double> mutable_grad();
  void zero_grad();

  // Graph-free copy of the values.
  Tensor detach() const;

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend Tensor make_result(Shape, std::vector<double>, std::vector<Tensor>,
                            const char*,
                            std::function<void(detail::Node&)>);

  std::shared_ptr<detail::Node> node_;
};

// Builds the output of a recorded operation. The backward function is kept
// only when grad mode is on and some input requires grad.
Tensor make_result(Shape shape, std::vector<double> value,
                   std::vector<Tensor> inputs, const char* op,
                   std::function<void(detail::Node&)> backward_fn);

// Rounds in place when the global precision is Float32.
void apply_precision(std::span<double> values);

// Reverse pass from a scalar. Leaf grads accumulate across calls.
void backward(const Tensor& loss);

}  // namespace spnet
