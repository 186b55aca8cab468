#pragma once

// Temporal context embeddings: each calendar value is mapped through a
// periodic, translation-invariant Mercer kernel realized as truncated Fourier
// features with learnable amplitudes and a learnable projection to d; the
// per-type vectors are concatenated and fused by a linear layer g.

#include <string>
#include <vector>

#include "mojito/dataio.hpp"
#include "mojito/ops.hpp"
#include "mojito/param_store.hpp"
#include "mojito/tensor.hpp"

namespace mojito {

struct MercerKernel {
  int period = 0;     // P_j, the context-type cardinality
  int n_freq = 0;     // K_j frequencies (2*K_j+1 raw features, <= d)
  Tensor amplitudes;  // 1 x (K_j+1), a_0 and one amplitude per frequency
  Tensor projection;  // d x d applied after zero-padding the features to d
};

class TemporalEmbedding {
 public:
  TemporalEmbedding() = default;
  TemporalEmbedding(const ContextSchema& schema, int d, Rng& init_rng);

  void register_params(ParameterStore& store, const std::string& prefix);

  // Embedding of one context value of one type; periodic in the value.
  Tensor mercer_embed(std::size_t type, int value) const;

  // All P_j embeddings of one type as rows; row c equals mercer_embed(type, c)
  // bit-for-bit, so batched paths can gather from it.
  Tensor mercer_table(std::size_t type) const;
  std::vector<Tensor> mercer_tables() const;

  // Fused embedding g([m_c1; ...; m_cC]) of one tuple.
  Tensor fuse_context(const ContextTuple& tuple) const;

  // Batched fusion of many tuples against precomputed per-type tables.
  Tensor fuse_rows(const std::vector<Tensor>& tables,
                   const std::vector<ContextTuple>& tuples) const;

  // Raw Fourier feature vector (before projection) of one value; exposes the
  // translation-invariant kernel phi(c)^T phi(c') for tests and diagnostics.
  std::vector<double> raw_features(std::size_t type, int value) const;

  int dim() const { return d_; }
  const ContextSchema& schema() const { return schema_; }

  // When set, fused context embeddings are identically zero (the --no-context
  // ablation); parameters remain registered but receive no gradient.
  bool ablated = false;

  std::vector<MercerKernel> kernels;
  Tensor fusion_weight;  // (C*d) x d
  Tensor fusion_bias;    // 1 x d

 private:
  int d_ = 0;
  ContextSchema schema_;
};

}  // namespace mojito
