#include "spnet/tensor.hpp"

#include <atomic>
#include <sstream>
#include <unordered_set>

namespace spnet {

namespace {

std::atomic<Precision> g_precision{Precision::kFloat32};
thread_local bool t_grad_enabled = true;

}  // namespace

void set_precision(Precision p) { g_precision.store(p); }
Precision precision() { return g_precision.load(); }

PrecisionScope::PrecisionScope(Precision p) : saved_(precision()) {
  set_precision(p);
}
PrecisionScope::~PrecisionScope() { set_precision(saved_); }

NoGradGuard::NoGradGuard() : saved_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = saved_; }

bool grad_enabled() { return t_grad_enabled; }

std::string Shape::str() const {
  std::ostringstream os;
  os << "(" << n << "," << c << "," << h << "," << w << ")";
  return os.str();
}

std::vector<double>& detail::Node::ensure_grad() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  return grad;
}

void apply_precision(std::span<double> values) {
  if (precision() != Precision::kFloat32) return;
  for (double& v : values) v = static_cast<double>(static_cast<float>(v));
}

namespace {

std::shared_ptr<detail::Node> make_leaf(Shape shape, std::vector<double> data,
                                        bool requires_grad) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw DimensionError("negative extent in shape " + shape.str());
  }
  if (data.size() != shape.numel()) {
    throw DimensionError("data length " + std::to_string(data.size()) +
                         " does not match shape " + shape.str());
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = shape;
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  return node;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(shape, 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> data(shape.numel(), value);
  apply_precision(data);
  return Tensor(make_leaf(shape, std::move(data), requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data,
                         bool requires_grad) {
  apply_precision(data);
  return Tensor(make_leaf(shape, std::move(data), requires_grad));
}

Tensor Tensor::scalar(double value) { return full({1, 1, 1, 1}, value); }

const Shape& Tensor::shape() const {
  static const Shape kEmpty{};
  return node_ ? node_->shape : kEmpty;
}

std::span<const double> Tensor::data() const& {
  if (!node_) return {};
  return node_->value;
}

std::span<double> Tensor::mutable_data() {
  if (!node_ || !node_->is_leaf) {
    throw PreconditionError("mutable_data requires a leaf tensor");
  }
  return node_->value;
}

double Tensor::at(int n, int c, int h, int w) const {
  const Shape& s = shape();
  if (n < 0 || n >= s.n || c < 0 || c >= s.c || h < 0 || h >= s.h || w < 0 ||
      w >= s.w) {
    throw DimensionError("index out of range for shape " + s.str());
  }
  return node_->value[((static_cast<std::size_t>(n) * s.c + c) * s.h + h) *
                          s.w +
                      w];
}

double Tensor::item() const {
  if (numel() != 1) {
    throw DimensionError("item() on non-scalar tensor " + shape().str());
  }
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

bool Tensor::has_grad() const {
  return node_ && node_->grad.size() == node_->value.size() &&
         !node_->value.empty();
}

std::span<const double> Tensor::grad() const& {
  if (!node_) return {};
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
  if (!node_) return {};
  return node_->ensure_grad();
}

void Tensor::zero_grad() {
  if (node_) node_->grad.assign(node_->value.size(), 0.0);
}

Tensor Tensor::detach() const {
  if (!node_) return {};
  return Tensor(make_leaf(node_->shape, node_->value, false));
}

Tensor make_result(Shape shape, std::vector<double> value,
                   std::vector<Tensor> inputs, const char* op,
                   std::function<void(detail::Node&)> backward_fn) {
  apply_precision(value);
  auto node = std::make_shared<detail::Node>();
  node->shape = shape;
  node->value = std::move(value);
  node->is_leaf = false;
  node->op = op;
  bool needs = false;
  if (grad_enabled()) {
    for (const Tensor& t : inputs) needs = needs || t.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (const Tensor& t : inputs) node->inputs.push_back(t.node_ptr());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw DimensionError("backward() requires a scalar loss, got shape " +
                         loss.shape().str());
  }
  detail::Node* root = loss.node();
  if (!root->requires_grad) return;

  // Iterative post-order DFS; `order` ends up with inputs before consumers.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (detail::Node* node : order) {
    if (node->is_leaf) {
      node->ensure_grad();
    } else {
      node->grad.assign(node->value.size(), 0.0);
    }
  }
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (!node->is_leaf && node->backward_fn) node->backward_fn(*node);
  }
}

}  // namespace spnet
