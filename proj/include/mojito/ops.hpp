#pragma once

// Differentiable operations over Tensor. Each op computes its value eagerly
// and, when gradients are enabled and some input requires them, records a
// backward closure on the output node.
//
// Only exact-shape arithmetic plus explicit scalar/row broadcasts are
// supported; shape mismatches raise DimensionError naming both shapes.

#include <cstdint>
#include <vector>

#include "mojito/tensor.hpp"

namespace mojito {

class Rng;

// -- linear algebra ----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n] -> [m,n]
Tensor transpose(const Tensor& x);                // [m,n] -> [n,m]

// -- elementwise -------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);      // exact shape
Tensor hadamard(const Tensor& a, const Tensor& b); // exact shape
Tensor add_const(const Tensor& x, double c);
Tensor scale_const(const Tensor& x, double c);
Tensor scale(const Tensor& x, const Tensor& s);    // s is a 1-element tensor
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
// log(max(x, eps)); gradient is zero where the clamp is active.
Tensor log_clamped(const Tensor& x, double eps = 1e-12);

// -- row/column structure ----------------------------------------------------

// Broadcast-add a [1,n] row to every row of x ([m,n]).
Tensor add_rows(const Tensor& x, const Tensor& row);
Tensor row_sums(const Tensor& x);  // [m,n] -> [m,1]
Tensor sum(const Tensor& x);       // -> [1,1]

Tensor concat_last_dim(const std::vector<Tensor>& parts);
std::vector<Tensor> split_last_dim(const Tensor& x, const std::vector<std::size_t>& sizes);
Tensor stack_rows(const std::vector<Tensor>& parts);  // concat along dim 0
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);

// -- softmax / masking -------------------------------------------------------

// Row-wise softmax. mask (same shape, entries 0 or 1) excludes zero entries
// from the distribution: masked outputs are exactly 0 and each row of the
// result sums to 1 over the unmasked entries. A fully masked row is a
// DomainError. Computed with max-subtraction.
Tensor softmax_rows(const Tensor& x);
Tensor softmax_rows(const Tensor& x, const Tensor& mask);

// Overwrites entries strictly above the diagonal of a square matrix with
// `fill`; gradients flow only through the kept entries.
Tensor mask_upper_triangle(const Tensor& x, double fill);

// -- lookups -----------------------------------------------------------------

// Row gather with the padding convention: id 0 is the reserved padding row
// and receives no gradient. Backward scatter-adds into the table.
Tensor embedding_lookup(const Tensor& table, const std::vector<std::int64_t>& ids);
// Row gather without the padding convention (all rows trainable).
Tensor gather_rows(const Tensor& table, const std::vector<std::int64_t>& ids);

// -- stochastic --------------------------------------------------------------

// mean + sigma * eps with eps i.i.d. standard normal; gradient w.r.t. mean is
// the identity and w.r.t. sigma is eps. sigma is a 1-element tensor >= 0.
Tensor gaussian_reparam(const Tensor& mean, const Tensor& sigma, Rng& rng);

// Inverted dropout: keeps entries with probability 1-rate and rescales by
// 1/(1-rate). rate in [0, 1).
Tensor dropout(const Tensor& x, double rate, Rng& rng);

// Row-wise layer normalization with learnable gain/bias of shape [1,n].
Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias,
                       double eps = 1e-8);

namespace detail {
// Raw row-major kernels shared by forward and backward paths.
// C[m,n] += or = A[m,k] * B[k,n] variants; _nt uses B transposed, _tn uses A
// transposed.
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c, bool accumulate);
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c, bool accumulate);
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c, bool accumulate);
}  // namespace detail

}  // namespace mojito
