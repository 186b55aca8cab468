#include "mojito/attention.hpp"

#include <cmath>

namespace mojito {

Tensor causal_mask(std::size_t L) {
  Tensor mask = Tensor::zeros({L, L});
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t j = 0; j <= i; ++j) mask.at(i, j) = 1.0;
  }
  return mask;
}

Tensor FeedForward::forward(const Tensor& x) const {
  return add_rows(matmul(relu(add_rows(matmul(x, w1), b1)), w2), b2);
}

MixtureAttentionBlock::MixtureAttentionBlock(int d, int heads, AttentionMode mode, Rng& init_rng)
    : d_(d), heads_(heads), mode_(mode) {
  if (d < 1 || heads < 1) throw DomainError("MixtureAttentionBlock: d and heads must be >= 1");
  const auto du = static_cast<std::size_t>(d);
  wq_it = Tensor::glorot(du, du, init_rng, true);
  wk_it = Tensor::glorot(du, du, init_rng, true);
  wq_c = Tensor::glorot(du, du, init_rng, true);
  wk_c = Tensor::glorot(du, du, init_rng, true);
  wv = Tensor::glorot(2 * du, 2 * du, init_rng, true);
  wo = Tensor::glorot(2 * static_cast<std::size_t>(heads) * du, 2 * du, init_rng, true);
  for (int j = 0; j < heads; ++j) {
    head_mix_logits.push_back(Tensor::randn({1, 2}, init_rng, 0.5, true));
  }
  // sigma starts at 0.1 per component: log(0.1^2)
  log_var = Tensor::full({1, 2}, std::log(0.01), true);
  ffn.w1 = Tensor::glorot(2 * du, 2 * du, init_rng, true);
  ffn.b1 = Tensor::zeros({1, 2 * du}, true);
  ffn.w2 = Tensor::glorot(2 * du, 2 * du, init_rng, true);
  ffn.b2 = Tensor::zeros({1, 2 * du}, true);
  if (mode == AttentionMode::kCompat) {
    ln1_gain = Tensor::full({1, 2 * du}, 1.0, true);
    ln1_bias = Tensor::zeros({1, 2 * du}, true);
    ln2_gain = Tensor::full({1, 2 * du}, 1.0, true);
    ln2_bias = Tensor::zeros({1, 2 * du}, true);
  }
}

void MixtureAttentionBlock::register_params(ParameterStore& store, const std::string& prefix) {
  store.add(prefix + ".wq_it", wq_it);
  store.add(prefix + ".wk_it", wk_it);
  store.add(prefix + ".wq_c", wq_c);
  store.add(prefix + ".wk_c", wk_c);
  store.add(prefix + ".wv", wv);
  store.add(prefix + ".wo", wo);
  for (std::size_t j = 0; j < head_mix_logits.size(); ++j) {
    store.add(prefix + ".head" + std::to_string(j) + ".mix_logits", head_mix_logits[j]);
  }
  store.add(prefix + ".log_var", log_var);
  store.add(prefix + ".ffn_w1", ffn.w1);
  store.add(prefix + ".ffn_b1", ffn.b1);
  store.add(prefix + ".ffn_w2", ffn.w2);
  store.add(prefix + ".ffn_b2", ffn.b2);
  if (mode_ == AttentionMode::kCompat) {
    store.add(prefix + ".ln1_gain", ln1_gain);
    store.add(prefix + ".ln1_bias", ln1_bias);
    store.add(prefix + ".ln2_gain", ln2_gain);
    store.add(prefix + ".ln2_bias", ln2_bias);
  }
}

Tensor MixtureAttentionBlock::component_logits(const Tensor& x, MixComponent k) const {
  const auto du = static_cast<std::size_t>(d_);
  if (x.shape().size() != 2 || x.cols() != 2 * du) {
    throw ContractError("component_logits: input must be L x 2d, got " + shape_str(x.shape()));
  }
  auto halves = split_last_dim(x, {du, du});
  const Tensor& xk = k == MixComponent::kItem ? halves[0] : halves[1];
  const Tensor& wq = k == MixComponent::kItem ? wq_it : wq_c;
  const Tensor& wk = k == MixComponent::kItem ? wk_it : wk_c;
  Tensor logits = matmul(matmul(xk, wq), transpose(matmul(xk, wk)));
  return mask_upper_triangle(logits, kMaskedLogit);
}

Tensor MixtureAttentionBlock::head_from_logits(const Tensor& logits_it, const Tensor& logits_c,
                                               const Tensor& values, int head, Rng* rng,
                                               RunMode mode, bool no_context) const {
  if (head < 0 || head >= heads_) throw IndexError("head index out of range");
  const std::size_t L = logits_it.rows();
  Tensor a;
  if (no_context) {
    // p_it fixed at 1; the context component is removed entirely.
    if (mode == RunMode::kTrain) {
      Tensor sig_it = exp(scale_const(split_last_dim(log_var, {1, 1})[0], 0.5));
      a = gaussian_reparam(logits_it, sig_it, *rng);
    } else {
      a = logits_it;
    }
  } else {
    Tensor p = softmax_rows(head_mix_logits[static_cast<std::size_t>(head)]);
    auto ps = split_last_dim(p, {1, 1});
    if (mode == RunMode::kTrain) {
      auto lv = split_last_dim(log_var, {1, 1});
      Tensor noisy_it = gaussian_reparam(logits_it, exp(scale_const(lv[0], 0.5)), *rng);
      Tensor noisy_c = gaussian_reparam(logits_c, exp(scale_const(lv[1], 0.5)), *rng);
      a = add(scale(noisy_it, ps[0]), scale(noisy_c, ps[1]));
    } else {
      a = add(scale(logits_it, ps[0]), scale(logits_c, ps[1]));
    }
  }
  Tensor scores = softmax_rows(scale_const(a, 1.0 / std::sqrt(static_cast<double>(d_))),
                               causal_mask(L));
  return matmul(scores, values);
}

Tensor MixtureAttentionBlock::head_attention(const Tensor& x, int head, Rng* rng, RunMode mode,
                                             bool no_context) const {
  if (mode == RunMode::kTrain && rng == nullptr) {
    throw ContractError("head_attention: train mode needs an rng");
  }
  Tensor logits_it = component_logits(x, MixComponent::kItem);
  Tensor logits_c;
  if (!no_context) logits_c = component_logits(x, MixComponent::kContext);
  Tensor values = matmul(x, wv);
  return head_from_logits(logits_it, logits_c, values, head, rng, mode, no_context);
}

Tensor MixtureAttentionBlock::forward(const Tensor& x, Rng* rng, RunMode mode,
                                      std::vector<Tensor>* head_outputs,
                                      bool no_context) const {
  if (mode == RunMode::kTrain && rng == nullptr) {
    throw ContractError("MixtureAttentionBlock::forward: train mode needs an rng");
  }
  Tensor logits_it = component_logits(x, MixComponent::kItem);
  Tensor logits_c;
  if (!no_context) logits_c = component_logits(x, MixComponent::kContext);
  Tensor values = matmul(x, wv);

  std::vector<Tensor> heads_out;
  heads_out.reserve(static_cast<std::size_t>(heads_));
  for (int j = 0; j < heads_; ++j) {
    heads_out.push_back(head_from_logits(logits_it, logits_c, values, j, rng, mode, no_context));
  }
  if (head_outputs) *head_outputs = heads_out;

  Tensor sal = matmul(concat_last_dim(heads_out), wo);
  if (mode_ == AttentionMode::kLiteral) {
    return ffn.forward(sal);
  }
  Tensor h1 = mode == RunMode::kTrain ? dropout(sal, kCompatDropoutRate, *rng) : sal;
  Tensor y1 = layer_norm_rows(add(x, h1), ln1_gain, ln1_bias);
  Tensor f = ffn.forward(y1);
  Tensor h2 = mode == RunMode::kTrain ? dropout(f, kCompatDropoutRate, *rng) : f;
  return layer_norm_rows(add(y1, h2), ln2_gain, ln2_bias);
}

std::pair<double, double> MixtureAttentionBlock::mixture_weights(int head) const {
  const Tensor& logits = head_mix_logits.at(static_cast<std::size_t>(head));
  const double a = logits.values()[0], b = logits.values()[1];
  const double m = std::max(a, b);
  const double ea = std::exp(a - m), eb = std::exp(b - m);
  return {ea / (ea + eb), eb / (ea + eb)};
}

double MixtureAttentionBlock::sigma(MixComponent k) const {
  return std::exp(0.5 * log_var.values()[k == MixComponent::kItem ? 0 : 1]);
}

EncoderStack::EncoderStack(int d, int heads, int n_blocks, AttentionMode mode, Rng& init_rng) {
  if (n_blocks < 1) throw DomainError("EncoderStack: need at least one block");
  for (int b = 0; b < n_blocks; ++b) blocks.emplace_back(d, heads, mode, init_rng);
}

void EncoderStack::register_params(ParameterStore& store, const std::string& prefix) {
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    blocks[b].register_params(store, prefix + ".block" + std::to_string(b));
  }
}

Tensor EncoderStack::encode(const Tensor& x0, Rng* rng, RunMode mode,
                            std::vector<Tensor>* last_block_heads, bool no_context) const {
  Tensor x = x0;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const bool last = b + 1 == blocks.size();
    x = blocks[b].forward(x, rng, mode, last ? last_block_heads : nullptr, no_context);
  }
  return x;
}

}  // namespace mojito
