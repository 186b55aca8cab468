#include "mojito/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "mojito/rng.hpp"

namespace mojito {

namespace detail {

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      const double av = arow[l];
      const double* brow = b + l * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c, bool accumulate) {
  // c[m,n] (+)= a[m,k] * b[n,k]^T
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double s = 0.0;
      for (std::size_t l = 0; l < k; ++l) s += arow[l] * brow[l];
      if (accumulate) {
        crow[j] += s;
      } else {
        crow[j] = s;
      }
    }
  }
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c, bool accumulate) {
  // c[m,n] (+)= a[k,m]^T * b[k,n]
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  for (std::size_t l = 0; l < k; ++l) {
    const double* arow = a + l * m;
    const double* brow = b + l * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace detail

namespace {

using detail::TensorNode;

bool track1(const Tensor& a) { return grad_enabled() && a.requires_grad(); }
bool track2(const Tensor& a, const Tensor& b) {
  return grad_enabled() && (a.requires_grad() || b.requires_grad());
}

void attach(Tensor& out, const std::vector<Tensor>& parents,
            std::function<void(const std::vector<double>&)> fn) {
  TensorNode* n = out.node();
  n->requires_grad = true;
  n->grad.assign(n->values.size(), 0.0);
  n->parents.reserve(parents.size());
  for (const Tensor& p : parents) n->parents.push_back(p.node_ptr());
  n->backprop = std::move(fn);
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.shape().size() != 2) {
    throw DimensionError(std::string(op) + " expects a rank-2 tensor, got " +
                         shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

double stable_sigmoid(double v) {
  if (v >= 0.0) {
    const double e = std::exp(-v);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  std::vector<double> vals(m * n);
  detail::gemm_nn(m, k, n, a.values().data(), b.values().data(), vals.data(), false);
  Tensor out = Tensor::from_values({m, n}, std::move(vals));
  if (track2(a, b)) {
    TensorNode* an = a.node();
    TensorNode* bn = b.node();
    attach(out, {a, b}, [an, bn, m, k, n](const std::vector<double>& flow) {
      detail::gemm_nt(m, n, k, flow.data(), bn->values.data(), an->flow.data(), true);
      detail::gemm_tn(k, m, n, an->values.data(), flow.data(), bn->flow.data(), true);
    });
  }
  return out;
}

Tensor transpose(const Tensor& x) {
  require_rank2(x, "transpose");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> vals(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) vals[j * m + i] = x.values()[i * n + j];
  }
  Tensor out = Tensor::from_values({n, m}, std::move(vals));
  if (track1(x)) {
    TensorNode* xn = x.node();
    attach(out, {x}, [xn, m, n](const std::vector<double>& flow) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) xn->flow[i * n + j] += flow[j * m + i];
      }
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> vals(a.numel());
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = a.values()[i] + b.values()[i];
  Tensor out = Tensor::from_values(a.shape(), std::move(vals));
  if (track2(a, b)) {
    TensorNode* an = a.node();
    TensorNode* bn = b.node();
    attach(out, {a, b}, [an, bn](const std::vector<double>& flow) {
      for (std::size_t i = 0; i < flow.size(); ++i) {
        an->flow[i] += flow[i];
        bn->flow[i] += flow[i];
      }
    });
  }
  return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  std::vector<double> vals(a.numel());
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = a.values()[i] * b.values()[i];
  Tensor out = Tensor::from_values(a.shape(), std::move(vals));
  if (track2(a, b)) {
    TensorNode* an = a.node();
    TensorNode* bn = b.node();
    attach(out, {a, b}, [an, bn](const std::vector<double>& flow) {
      for (std::size_t i = 0; i < flow.size(); ++i) {
        an->flow[i] += flow[i] * bn->values[i];
        bn->flow[i] += flow[i] * an->values[i];
      }
    });
  }
  return out;
}

Tensor add_const(const Tensor& x, double c) {
  std::vector<double> vals(x.numel());
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = x.values()[i] + c;
  Tensor out = Tensor::from_values(x.shape(), std::move(vals));
  if (track1(x)) {
    TensorNode* xn = x.node();
    attach(out, {x}, [xn](const std::vector<double>& flow) {
      for (std::size_t i = 0; i < flow.size(); ++i) xn->flow[i] += flow[i];
    });
  }
  return out;
}

Tensor scale_const(const Tensor& x, double c) {
  std::vector<double> vals(x.numel());
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = x.values()[i] * c;
  Tensor out = Tensor::from_values(x.shape(), std::move(vals));
  if (track1(x)) {
    TensorNode* xn = x.node();
    attach(out, {x}, [xn, c](const std::vector<double>& flow) {
      for (std::size_t i = 0; i < flow.size(); ++i) xn->flow[i] += c * flow[i];
    });
  }
  return out;
}

Tensor scale(const Tensor& x, const Tensor& s) {
  if (s.numel() != 1) {
    throw ContractError("scale: scaling factor must be a 1-element tensor, got " +
                        shape_str(s.shape()));
  }
  const double sv = s.values()[0];
  std::vector<double> vals(x.numel());
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = x.values()[i] * sv;
  Tensor out = Tensor::from_values(x.shape(), std::move(vals));
  if (track2(x, s)) {
    TensorNode* xn = x.node();
    TensorNode* sn = s.node();
    attach(out, {x, s}, [xn, sn, sv](const std::vector<double>& flow) {
      double acc = 0.0;
      for (std::size_t i = 0; i < flow.size(); ++i) {
        xn->flow[i] += sv * flow[i];
        acc += flow[i] * xn->values[i];
      }
      sn->flow[0] += acc;
    });
  }
  return out;
}

Tensor relu(const Tensor& x) {
  std::vector<double> vals(x.numel());
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = std::max(0.0, x.values()[i]);
  Tensor out = Tensor::from_values(x.shape(), std::move(vals));
  if (track1(x)) {
    TensorNode* xn = x.node();
    attach(out, {x}, [xn](const std::vector<double>& flow) {
      for (std::size_t i = 0; i < flow.size(); ++i) {
        if (xn->values[i] > 0.0) xn->flow[i] += flow[i];
      }
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> vals(x.numel());
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = stable_sigmoid(x.values()[i]);
  Tensor out = Tensor::from_values(x.shape(), std::move(vals));
  if (track1(x)) {
    TensorNode* xn = x.node();
    TensorNode* on = out.node();
    attach(out, {x}, [xn, on](const std::vector<double>& flow) {
      for (std::size_t i = 0; i < flow.size(); ++i) {
        const double y = on->values[i];
        xn->flow[i] += flow[i] * y * (1.0 - y);
      }
    });
  }
  return out;
}

Tensor exp(const Tensor& x) {
  std::vector<double> vals(x.numel());
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = std::exp(x.values()[i]);
  Tensor out = Tensor::from_values(x.shape(), std::move(vals));
  if (track1(x)) {
    TensorNode* xn = x.node();
    TensorNode* on = out.node();
    attach(out, {x}, [xn, on](const std::vector<double>& flow) {
      for (std::size_t i = 0; i < flow.size(); ++i) xn->flow[i] += flow[i] * on->values[i];
    });
  }
  return out;
}

Tensor log_clamped(const Tensor& x, double eps) {
  if (eps <= 0.0) throw DomainError("log_clamped: eps must be positive");
  std::vector<double> vals(x.numel());
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = std::log(std::max(x.values()[i], eps));
  Tensor out = Tensor::from_values(x.shape(), std::move(vals));
  if (track1(x)) {
    TensorNode* xn = x.node();
    attach(out, {x}, [xn, eps](const std::vector<double>& flow) {
      for (std::size_t i = 0; i < flow.size(); ++i) {
        if (xn->values[i] > eps) xn->flow[i] += flow[i] / xn->values[i];
      }
    });
  }
  return out;
}

Tensor add_rows(const Tensor& x, const Tensor& row) {
  require_rank2(x, "add_rows");
  require_rank2(row, "add_rows");
  const std::size_t m = x.rows(), n = x.cols();
  if (row.rows() != 1 || row.cols() != n) {
    throw DimensionError("add_rows: row shape " + shape_str(row.shape()) +
                         " does not broadcast over " + shape_str(x.shape()));
  }
  std::vector<double> vals(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) vals[i * n + j] = x.values()[i * n + j] + row.values()[j];
  }
  Tensor out = Tensor::from_values({m, n}, std::move(vals));
  if (track2(x, row)) {
    TensorNode* xn = x.node();
    TensorNode* rn = row.node();
    attach(out, {x, row}, [xn, rn, m, n](const std::vector<double>& flow) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          xn->flow[i * n + j] += flow[i * n + j];
          rn->flow[j] += flow[i * n + j];
        }
      }
    });
  }
  return out;
}

Tensor row_sums(const Tensor& x) {
  require_rank2(x, "row_sums");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> vals(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) vals[i] += x.values()[i * n + j];
  }
  Tensor out = Tensor::from_values({m, 1}, std::move(vals));
  if (track1(x)) {
    TensorNode* xn = x.node();
    attach(out, {x}, [xn, m, n](const std::vector<double>& flow) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) xn->flow[i * n + j] += flow[i];
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  Tensor out = Tensor::scalar(s);
  if (track1(x)) {
    TensorNode* xn = x.node();
    attach(out, {x}, [xn](const std::vector<double>& flow) {
      for (std::size_t i = 0; i < xn->flow.size(); ++i) xn->flow[i] += flow[0];
    });
  }
  return out;
}

Tensor concat_last_dim(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_last_dim: no parts");
  const std::size_t m = parts[0].rows();
  std::size_t total = 0;
  bool any_grad = false;
  for (const Tensor& p : parts) {
    require_rank2(p, "concat_last_dim");
    if (p.rows() != m) {
      throw DimensionError("concat_last_dim: leading dimensions disagree, " +
                           shape_str(parts[0].shape()) + " vs " + shape_str(p.shape()));
    }
    total += p.cols();
    any_grad = any_grad || p.requires_grad();
  }
  std::vector<double> vals(m * total);
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    const std::size_t n = p.cols();
    for (std::size_t i = 0; i < m; ++i) {
      std::memcpy(vals.data() + i * total + off, p.values().data() + i * n, n * sizeof(double));
    }
    off += n;
  }
  Tensor out = Tensor::from_values({m, total}, std::move(vals));
  if (grad_enabled() && any_grad) {
    std::vector<TensorNode*> nodes;
    std::vector<std::size_t> offsets;
    std::size_t o = 0;
    for (const Tensor& p : parts) {
      nodes.push_back(p.node());
      offsets.push_back(o);
      o += p.cols();
    }
    attach(out, parts, [nodes, offsets, m, total](const std::vector<double>& flow) {
      for (std::size_t pi = 0; pi < nodes.size(); ++pi) {
        TensorNode* pn = nodes[pi];
        const std::size_t n = pn->shape[1];
        const std::size_t off2 = offsets[pi];
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) pn->flow[i * n + j] += flow[i * total + off2 + j];
        }
      }
    });
  }
  return out;
}

std::vector<Tensor> split_last_dim(const Tensor& x, const std::vector<std::size_t>& sizes) {
  require_rank2(x, "split_last_dim");
  const std::size_t m = x.rows(), total = x.cols();
  std::size_t check = 0;
  for (std::size_t s : sizes) check += s;
  if (check != total || sizes.empty()) {
    throw DimensionError("split_last_dim: sizes sum to " + std::to_string(check) +
                         " but tensor has " + std::to_string(total) + " columns");
  }
  std::vector<Tensor> outs;
  std::size_t off = 0;
  for (std::size_t s : sizes) {
    std::vector<double> vals(m * s);
    for (std::size_t i = 0; i < m; ++i) {
      std::memcpy(vals.data() + i * s, x.values().data() + i * total + off, s * sizeof(double));
    }
    Tensor part = Tensor::from_values({m, s}, std::move(vals));
    if (track1(x)) {
      TensorNode* xn = x.node();
      const std::size_t off_cap = off;
      attach(part, {x}, [xn, m, s, total, off_cap](const std::vector<double>& flow) {
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < s; ++j) xn->flow[i * total + off_cap + j] += flow[i * s + j];
        }
      });
    }
    outs.push_back(std::move(part));
    off += s;
  }
  return outs;
}

Tensor stack_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("stack_rows: no parts");
  const std::size_t n = parts[0].cols();
  std::size_t m = 0;
  bool any_grad = false;
  for (const Tensor& p : parts) {
    require_rank2(p, "stack_rows");
    if (p.cols() != n) {
      throw DimensionError("stack_rows: column counts disagree, " + shape_str(parts[0].shape()) +
                           " vs " + shape_str(p.shape()));
    }
    m += p.rows();
    any_grad = any_grad || p.requires_grad();
  }
  std::vector<double> vals;
  vals.reserve(m * n);
  for (const Tensor& p : parts) {
    vals.insert(vals.end(), p.values().begin(), p.values().end());
  }
  Tensor out = Tensor::from_values({m, n}, std::move(vals));
  if (grad_enabled() && any_grad) {
    std::vector<TensorNode*> nodes;
    std::vector<std::size_t> row_offsets;
    std::size_t r = 0;
    for (const Tensor& p : parts) {
      nodes.push_back(p.node());
      row_offsets.push_back(r);
      r += p.rows();
    }
    attach(out, parts, [nodes, row_offsets, n](const std::vector<double>& flow) {
      for (std::size_t pi = 0; pi < nodes.size(); ++pi) {
        TensorNode* pn = nodes[pi];
        const std::size_t rows = pn->shape[0];
        const std::size_t base = row_offsets[pi] * n;
        for (std::size_t i = 0; i < rows * n; ++i) pn->flow[i] += flow[base + i];
      }
    });
  }
  return out;
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  require_rank2(x, "slice_rows");
  const std::size_t m = x.rows(), n = x.cols();
  if (count == 0 || begin + count > m) {
    throw DimensionError("slice_rows: range [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of " + std::to_string(m) +
                         " rows");
  }
  std::vector<double> vals(x.values().begin() + static_cast<std::ptrdiff_t>(begin * n),
                           x.values().begin() + static_cast<std::ptrdiff_t>((begin + count) * n));
  Tensor out = Tensor::from_values({count, n}, std::move(vals));
  if (track1(x)) {
    TensorNode* xn = x.node();
    attach(out, {x}, [xn, begin, n](const std::vector<double>& flow) {
      for (std::size_t i = 0; i < flow.size(); ++i) xn->flow[begin * n + i] += flow[i];
    });
  }
  return out;
}

namespace {

Tensor softmax_rows_impl(const Tensor& x, const Tensor* mask) {
  require_rank2(x, "softmax_rows");
  if (mask) require_same_shape(x, *mask, "softmax_rows");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> vals(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (mask && mask->values()[i * n + j] == 0.0) continue;
      any = true;
      mx = std::max(mx, x.values()[i * n + j]);
    }
    if (!any) {
      throw DomainError("softmax_rows: row " + std::to_string(i) + " is fully masked");
    }
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (mask && mask->values()[i * n + j] == 0.0) continue;
      const double e = std::exp(x.values()[i * n + j] - mx);
      vals[i * n + j] = e;
      z += e;
    }
    for (std::size_t j = 0; j < n; ++j) vals[i * n + j] /= z;
  }
  Tensor out = Tensor::from_values({m, n}, std::move(vals));
  if (track1(x)) {
    TensorNode* xn = x.node();
    TensorNode* on = out.node();
    attach(out, {x}, [xn, on, m, n](const std::vector<double>& flow) {
      for (std::size_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += on->values[i * n + j] * flow[i * n + j];
        for (std::size_t j = 0; j < n; ++j) {
          const double y = on->values[i * n + j];
          if (y != 0.0) xn->flow[i * n + j] += y * (flow[i * n + j] - dot);
        }
      }
    });
  }
  return out;
}

}  // namespace

Tensor softmax_rows(const Tensor& x) { return softmax_rows_impl(x, nullptr); }

Tensor softmax_rows(const Tensor& x, const Tensor& mask) { return softmax_rows_impl(x, &mask); }

Tensor mask_upper_triangle(const Tensor& x, double fill) {
  require_rank2(x, "mask_upper_triangle");
  const std::size_t m = x.rows(), n = x.cols();
  if (m != n) {
    throw DimensionError("mask_upper_triangle expects a square matrix, got " +
                         shape_str(x.shape()));
  }
  std::vector<double> vals(x.values());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) vals[i * n + j] = fill;
  }
  Tensor out = Tensor::from_values({m, n}, std::move(vals));
  if (track1(x)) {
    TensorNode* xn = x.node();
    attach(out, {x}, [xn, m, n](const std::vector<double>& flow) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j <= i; ++j) xn->flow[i * n + j] += flow[i * n + j];
      }
    });
  }
  return out;
}

namespace {

Tensor gather_impl(const Tensor& table, const std::vector<std::int64_t>& ids, bool freeze_row0,
                   const char* op) {
  require_rank2(table, op);
  if (ids.empty()) throw ContractError(std::string(op) + ": empty id list");
  const std::size_t v = table.rows(), d = table.cols();
  for (std::int64_t id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= v) {
      throw IndexError(std::string(op) + ": id " + std::to_string(id) + " out of range [0, " +
                       std::to_string(v) + ")");
    }
  }
  const std::size_t l = ids.size();
  std::vector<double> vals(l * d);
  for (std::size_t i = 0; i < l; ++i) {
    std::memcpy(vals.data() + i * d, table.values().data() + static_cast<std::size_t>(ids[i]) * d,
                d * sizeof(double));
  }
  Tensor out = Tensor::from_values({l, d}, std::move(vals));
  if (track1(table)) {
    TensorNode* tn = table.node();
    std::vector<std::int64_t> ids_copy = ids;
    attach(out, {table}, [tn, ids_copy, d, freeze_row0](const std::vector<double>& flow) {
      for (std::size_t i = 0; i < ids_copy.size(); ++i) {
        const auto id = static_cast<std::size_t>(ids_copy[i]);
        if (freeze_row0 && id == 0) continue;
        for (std::size_t c = 0; c < d; ++c) tn->flow[id * d + c] += flow[i * d + c];
      }
    });
  }
  return out;
}

}  // namespace

Tensor embedding_lookup(const Tensor& table, const std::vector<std::int64_t>& ids) {
  return gather_impl(table, ids, true, "embedding_lookup");
}

Tensor gather_rows(const Tensor& table, const std::vector<std::int64_t>& ids) {
  return gather_impl(table, ids, false, "gather_rows");
}

Tensor gaussian_reparam(const Tensor& mean, const Tensor& sigma, Rng& rng) {
  if (sigma.numel() != 1) {
    throw ContractError("gaussian_reparam: sigma must be a 1-element tensor, got " +
                        shape_str(sigma.shape()));
  }
  const double sv = sigma.values()[0];
  if (sv < 0.0) {
    throw DomainError("gaussian_reparam: sigma must be >= 0, got " + std::to_string(sv));
  }
  std::vector<double> eps(mean.numel());
  for (double& e : eps) e = rng.normal();
  std::vector<double> vals(mean.numel());
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = mean.values()[i] + sv * eps[i];
  Tensor out = Tensor::from_values(mean.shape(), std::move(vals));
  if (track2(mean, sigma)) {
    TensorNode* mn = mean.node();
    TensorNode* sn = sigma.node();
    attach(out, {mean, sigma}, [mn, sn, eps](const std::vector<double>& flow) {
      double acc = 0.0;
      for (std::size_t i = 0; i < flow.size(); ++i) {
        mn->flow[i] += flow[i];
        acc += flow[i] * eps[i];
      }
      sn->flow[0] += acc;
    });
  }
  return out;
}

Tensor dropout(const Tensor& x, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw DomainError("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  }
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.numel());
  for (double& mv : mask) mv = rng.uniform01() >= rate ? keep_scale : 0.0;
  std::vector<double> vals(x.numel());
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = x.values()[i] * mask[i];
  Tensor out = Tensor::from_values(x.shape(), std::move(vals));
  if (track1(x)) {
    TensorNode* xn = x.node();
    attach(out, {x}, [xn, mask](const std::vector<double>& flow) {
      for (std::size_t i = 0; i < flow.size(); ++i) xn->flow[i] += flow[i] * mask[i];
    });
  }
  return out;
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_rank2(x, "layer_norm_rows");
  const std::size_t m = x.rows(), n = x.cols();
  if (gain.rows() != 1 || gain.cols() != n || bias.rows() != 1 || bias.cols() != n) {
    throw DimensionError("layer_norm_rows: gain/bias must be 1x" + std::to_string(n));
  }
  std::vector<double> xhat(m * n);
  std::vector<double> inv_std(m);
  std::vector<double> vals(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += x.values()[i * n + j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double dvj = x.values()[i * n + j] - mu;
      var += dvj * dvj;
    }
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[i] = inv;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (x.values()[i * n + j] - mu) * inv;
      xhat[i * n + j] = h;
      vals[i * n + j] = h * gain.values()[j] + bias.values()[j];
    }
  }
  Tensor out = Tensor::from_values({m, n}, std::move(vals));
  if (grad_enabled() && (x.requires_grad() || gain.requires_grad() || bias.requires_grad())) {
    TensorNode* xn = x.node();
    TensorNode* gn = gain.node();
    TensorNode* bn = bias.node();
    attach(out, {x, gain, bias},
           [xn, gn, bn, xhat, inv_std, m, n](const std::vector<double>& flow) {
             const double nd = static_cast<double>(n);
             for (std::size_t i = 0; i < m; ++i) {
               double sum_dh = 0.0, sum_dh_h = 0.0;
               for (std::size_t j = 0; j < n; ++j) {
                 const double dh = flow[i * n + j] * gn->values[j];
                 sum_dh += dh;
                 sum_dh_h += dh * xhat[i * n + j];
               }
               for (std::size_t j = 0; j < n; ++j) {
                 const double dh = flow[i * n + j] * gn->values[j];
                 xn->flow[i * n + j] +=
                     inv_std[i] / nd * (nd * dh - sum_dh - xhat[i * n + j] * sum_dh_h);
                 gn->flow[j] += flow[i * n + j] * xhat[i * n + j];
                 bn->flow[j] += flow[i * n + j];
               }
             }
           });
  }
  return out;
}

}  // namespace mojito
