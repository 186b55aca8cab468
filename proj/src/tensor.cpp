#include "mojito/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "mojito/rng.hpp"

namespace mojito {

namespace {

thread_local bool g_grad_enabled = true;

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

std::shared_ptr<detail::TensorNode> make_node(const Shape& shape, std::vector<double> values,
                                              bool requires_grad) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one dimension");
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
  }
  if (values.size() != shape_numel(shape)) {
    throw DimensionError("value count " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape));
  }
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = shape;
  node->values = std::move(values);
  node->requires_grad = requires_grad;
  if (requires_grad) node->grad.assign(node->values.size(), 0.0);
  return node;
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out.empty() ? "scalar" : out;
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  return Tensor(make_node(shape, std::vector<double>(shape_numel(shape), 0.0), requires_grad));
}

Tensor Tensor::full(const Shape& shape, double value, bool requires_grad) {
  return Tensor(make_node(shape, std::vector<double>(shape_numel(shape), value), requires_grad));
}

Tensor Tensor::from_values(const Shape& shape, std::vector<double> values, bool requires_grad) {
  return Tensor(make_node(shape, std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values({1, 1}, {value}, requires_grad);
}

Tensor Tensor::randn(const Shape& shape, Rng& rng, double stddev, bool requires_grad) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = stddev * rng.normal();
  return Tensor(make_node(shape, std::move(v), requires_grad));
}

Tensor Tensor::glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng, bool requires_grad) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(fan_in * fan_out);
  for (double& x : v) x = bound * (2.0 * rng.uniform01() - 1.0);
  return Tensor(make_node({fan_in, fan_out}, std::move(v), requires_grad));
}

std::size_t Tensor::rows() const { return node_->shape[0]; }

std::size_t Tensor::cols() const { return node_->shape.size() >= 2 ? node_->shape[1] : 1; }

std::vector<double>& Tensor::grad() {
  if (!node_->requires_grad) throw ContractError("tensor does not track gradients");
  return node_->grad;
}

const std::vector<double>& Tensor::grad() const {
  if (!node_->requires_grad) throw ContractError("tensor does not track gradients");
  return node_->grad;
}

double Tensor::scalar_value() const {
  if (numel() != 1) {
    throw ContractError("expected a scalar tensor, got shape " + shape_str(node_->shape));
  }
  return node_->values[0];
}

double Tensor::operator()(std::size_t r, std::size_t c) const {
  return node_->values[r * cols() + c];
}

double& Tensor::at(std::size_t r, std::size_t c) { return node_->values[r * cols() + c]; }

void Tensor::zero_grad() {
  if (node_->requires_grad) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void backward(const Tensor& loss) {
  using detail::TensorNode;
  if (!loss.defined()) throw ContractError("backward: undefined tensor");
  if (loss.numel() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  }

  // Iterative post-order DFS: every node appears after all of its parents,
  // so the reversed order visits consumers before producers.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  visited.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next_parent] = stack.back();
    if (next_parent < node->parents.size()) {
      TensorNode* p = node->parents[next_parent++].get();
      if (visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (TensorNode* n : order) n->flow.assign(n->values.size(), 0.0);
  loss.node()->flow[0] = 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backprop) n->backprop(n->flow);
  }

  for (TensorNode* n : order) {
    if (n->requires_grad) {
      for (std::size_t i = 0; i < n->grad.size(); ++i) n->grad[i] += n->flow[i];
    }
    n->flow.clear();
    n->flow.shrink_to_fit();
  }
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

bool grad_enabled() { return g_grad_enabled; }

bool all_finite(const Tensor& t) {
  for (double v : t.values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("max_abs_diff: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  }
  return m;
}

}  // namespace mojito
