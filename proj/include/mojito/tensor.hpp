#pragma once

// Dense float64 tensor with reverse-mode automatic differentiation.
//
// A Tensor is a cheap handle onto a reference-counted node. Operations on
// tensors (see ops.hpp) record the computation graph through parent links and
// a backward closure; backward(loss) runs reverse accumulation from a scalar
// loss and adds the result into the .grad buffer of every reachable tensor
// that requires gradients. Repeated backward calls accumulate; callers zero
// grads explicitly (ParameterStore::zero_all_grads or Tensor::zero_grad).
//
// Storage is row-major. Graphs are confined to one thread; tensors themselves
// may be moved/shared across threads once no backward pass is running.

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace mojito {

class Rng;

using Shape = std::vector<std::size_t>;

struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IndexError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string shape_str(const Shape& s);

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<double> values;
  bool requires_grad = false;
  std::vector<double> grad;  // sized like values iff requires_grad

  // Graph edges. backprop pushes this node's flow into its parents' flow
  // buffers; `flow` is transient state owned by backward().
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(const std::vector<double>& flow)> backprop;
  std::vector<double> flow;

  std::size_t numel() const { return values.size(); }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, double value, bool requires_grad = false);
  static Tensor from_values(const Shape& shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  // Entries i.i.d. N(0, stddev^2).
  static Tensor randn(const Shape& shape, Rng& rng, double stddev, bool requires_grad = false);
  // Entries uniform in [-bound, bound] with bound = sqrt(6 / (fan_in + fan_out)).
  static Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng,
                       bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->values.size(); }
  std::size_t rows() const;  // extent of dim 0
  std::size_t cols() const;  // extent of dim 1 (1 for rank-1 tensors)
  bool requires_grad() const { return node_->requires_grad; }

  std::vector<double>& values() { return node_->values; }
  const std::vector<double>& values() const { return node_->values; }
  std::vector<double>& grad();
  const std::vector<double>& grad() const;

  double scalar_value() const;
  double operator()(std::size_t r, std::size_t c) const;
  double& at(std::size_t r, std::size_t c);

  void zero_grad();

  detail::TensorNode* node() const { return node_.get(); }
  const std::shared_ptr<detail::TensorNode>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

// Reverse accumulation from a scalar loss. Adds into .grad of every reachable
// requires_grad tensor; tensors outside the graph are untouched.
void backward(const Tensor& loss);

// While alive on a thread, ops on that thread record no graph (pure value
// computation). Used for inference and evaluation.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_enabled();

bool all_finite(const Tensor& t);
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace mojito
