#include "mojito/param_store.hpp"

#include <cmath>

namespace mojito {

void ParameterStore::add(const std::string& path, const Tensor& t) {
  if (!t.defined() || !t.requires_grad()) {
    throw ContractError("parameter '" + path + "' must be a gradient-tracking tensor");
  }
  if (entries_.count(path)) {
    throw ContractError("parameter '" + path + "' registered twice");
  }
  Entry e;
  e.tensor = t;
  e.adam.m.assign(t.numel(), 0.0);
  e.adam.v.assign(t.numel(), 0.0);
  entries_.emplace(path, std::move(e));
}

Tensor& ParameterStore::get(const std::string& path) {
  auto it = entries_.find(path);
  if (it == entries_.end()) throw ContractError("unknown parameter '" + path + "'");
  return it->second.tensor;
}

const Tensor& ParameterStore::get(const std::string& path) const {
  auto it = entries_.find(path);
  if (it == entries_.end()) throw ContractError("unknown parameter '" + path + "'");
  return it->second.tensor;
}

AdamState& ParameterStore::adam_state(const std::string& path) {
  auto it = entries_.find(path);
  if (it == entries_.end()) throw ContractError("unknown parameter '" + path + "'");
  return it->second.adam;
}

void ParameterStore::zero_all_grads() {
  for (auto& [path, entry] : entries_) entry.tensor.zero_grad();
}

std::vector<std::string> ParameterStore::paths() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [path, entry] : entries_) out.push_back(path);
  return out;
}

void adam_step(ParameterStore& store, double lr, double beta1, double beta2, double eps) {
  store.for_each([&](const std::string& path, Tensor& t, AdamState& st) {
    std::vector<double>& g = t.grad();
    if (g.size() != t.numel()) {
      throw ContractError("adam_step: parameter '" + path + "' has no gradient buffer");
    }
    st.step += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(st.step));
    std::vector<double>& vals = t.values();
    for (std::size_t i = 0; i < g.size(); ++i) {
      st.m[i] = beta1 * st.m[i] + (1.0 - beta1) * g[i];
      st.v[i] = beta2 * st.v[i] + (1.0 - beta2) * g[i] * g[i];
      const double m_hat = st.m[i] / bc1;
      const double v_hat = st.v[i] / bc2;
      vals[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
    std::fill(g.begin(), g.end(), 0.0);
  });
}

}  // namespace mojito
