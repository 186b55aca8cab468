#pragma once

// Named trainable parameters and their Adam optimizer state. Iteration order
// is the lexicographic parameter path, which fixes the update and
// serialization order.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mojito/tensor.hpp"

namespace mojito {

struct AdamState {
  std::vector<double> m;  // first-moment estimate, same size as the parameter
  std::vector<double> v;  // second-moment estimate
  std::uint64_t step = 0;
};

class ParameterStore {
 public:
  // Registers a parameter under `path`; the tensor must track gradients.
  void add(const std::string& path, const Tensor& t);

  Tensor& get(const std::string& path);
  const Tensor& get(const std::string& path) const;
  bool contains(const std::string& path) const { return entries_.count(path) != 0; }
  std::size_t size() const { return entries_.size(); }

  AdamState& adam_state(const std::string& path);

  void zero_all_grads();

  // Paths in update/serialization order.
  std::vector<std::string> paths() const;

  template <typename Fn>
  void for_each(Fn&& fn) {  // fn(path, Tensor&, AdamState&)
    for (auto& [path, entry] : entries_) fn(path, entry.tensor, entry.adam);
  }
  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (const auto& [path, entry] : entries_) fn(path, entry.tensor, entry.adam);
  }

 private:
  struct Entry {
    Tensor tensor;
    AdamState adam;
  };
  std::map<std::string, Entry> entries_;
};

// One Adam update with bias correction over every parameter in the store:
//   m <- b1*m + (1-b1)*g,  v <- b2*v + (1-b2)*g^2
//   theta -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
// Gradients are zeroed afterwards.
void adam_step(ParameterStore& store, double lr, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8);

}  // namespace mojito
