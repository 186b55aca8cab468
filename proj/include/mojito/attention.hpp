#pragma once

// The short-term encoder: stacked self-attention blocks whose per-head
// attention matrix is drawn from a two-component Gaussian mixture over an
// item-based and a context-based query-key product. The query/key projections
// are a pool shared by all heads of a block; a head owns only its mixture
// logits. The per-component variance is a scalar per block.

#include <string>
#include <utility>
#include <vector>

#include "mojito/ops.hpp"
#include "mojito/param_store.hpp"
#include "mojito/rng.hpp"
#include "mojito/tensor.hpp"

namespace mojito {

enum class RunMode { kTrain, kInference };
enum class AttentionMode { kLiteral, kCompat };
enum class MixComponent { kItem, kContext };

// Stand-in for -inf on masked logits; exp() underflows it to exactly zero
// while keeping buffers finite.
inline constexpr double kMaskedLogit = -1e30;

// Dropout rate of the compat attention mode (literal mode has none).
inline constexpr double kCompatDropoutRate = 0.2;

// Constant lower-triangular 0/1 mask of size L.
Tensor causal_mask(std::size_t L);

struct FeedForward {
  Tensor w1, b1, w2, b2;  // 2d x 2d weights, 1 x 2d biases
  Tensor forward(const Tensor& x) const;
};

class MixtureAttentionBlock {
 public:
  MixtureAttentionBlock() = default;
  MixtureAttentionBlock(int d, int heads, AttentionMode mode, Rng& init_rng);

  void register_params(ParameterStore& store, const std::string& prefix);

  // Q_k K_k^T over the item (first d columns) or context (last d columns)
  // half of x, with the causal mask written into the upper triangle.
  Tensor component_logits(const Tensor& x, MixComponent k) const;

  // One head's attention output softmax(A_j / sqrt(d)) V, of shape L x 2d.
  // Train mode draws reparameterized noise per component from rng; inference
  // uses the mixture mean and needs no rng.
  Tensor head_attention(const Tensor& x, int head, Rng* rng, RunMode mode,
                        bool no_context = false) const;

  // Full block: SAL (head concat x W^O) then FFL. In literal mode that is the
  // whole block; compat mode wraps both in dropout + residual + layer norm.
  // head_outputs, when given, receives the per-head L x 2d outputs.
  Tensor forward(const Tensor& x, Rng* rng, RunMode mode,
                 std::vector<Tensor>* head_outputs = nullptr, bool no_context = false) const;

  // Current mixture weights (p_item, p_context) of one head.
  std::pair<double, double> mixture_weights(int head) const;
  // Current noise standard deviation of one component.
  double sigma(MixComponent k) const;

  int d() const { return d_; }
  int heads() const { return heads_; }
  AttentionMode mode() const { return mode_; }

  Tensor wq_it, wk_it, wq_c, wk_c;     // d x d shared pool
  Tensor wv;                           // 2d x 2d
  Tensor wo;                           // 2Hd x 2d
  std::vector<Tensor> head_mix_logits; // per head, 1 x 2 (item, context)
  Tensor log_var;                      // 1 x 2 per-component log sigma^2
  FeedForward ffn;
  Tensor ln1_gain, ln1_bias, ln2_gain, ln2_bias;  // compat mode only

 private:
  Tensor head_from_logits(const Tensor& logits_it, const Tensor& logits_c, const Tensor& values,
                          int head, Rng* rng, RunMode mode, bool no_context) const;

  int d_ = 0;
  int heads_ = 0;
  AttentionMode mode_ = AttentionMode::kLiteral;
};

class EncoderStack {
 public:
  EncoderStack() = default;
  EncoderStack(int d, int heads, int n_blocks, AttentionMode mode, Rng& init_rng);

  void register_params(ParameterStore& store, const std::string& prefix);

  // X^(B) after all blocks. last_block_heads, when given, receives the
  // per-head outputs of the final block (for the redundancy diagnostic).
  Tensor encode(const Tensor& x0, Rng* rng, RunMode mode,
                std::vector<Tensor>* last_block_heads = nullptr, bool no_context = false) const;

  std::vector<MixtureAttentionBlock> blocks;
};

}  // namespace mojito
