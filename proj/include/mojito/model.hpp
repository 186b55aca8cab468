#pragma once

// Model assembly: configuration, the trainable tables and encoder stack, the
// short/long relevance scores, their lambda combination, the
// negative-sampling losses, and top-k prediction.

#include <cstdint>
#include <string>
#include <vector>

#include "mojito/attention.hpp"
#include "mojito/dataio.hpp"
#include "mojito/long_term.hpp"
#include "mojito/param_store.hpp"
#include "mojito/temporal_embedding.hpp"

namespace mojito {

struct MojitoConfig {
  int d = 64;
  int seq_len = 50;  // L
  int blocks = 2;    // B
  int heads = 2;     // H
  int fism_n = 20;   // N
  double lambda = 0.5;
  double lr = 0.001;
  int batch = 512;
  int epochs = 100;
  int patience = 10;
  std::uint64_t seed = 42;
  std::string schema = "month,day_of_month,day_of_week,hour";
  AttentionMode attention_mode = AttentionMode::kLiteral;
  bool no_context = false;

  // Parses flat key=value text. Every bad key/value lands in `errors`;
  // applied defaults worth mentioning (a missing lambda) land in `notices`.
  static MojitoConfig parse(const std::string& text, std::vector<std::string>& errors,
                            std::vector<std::string>& notices);

  // Canonical serialization (fixed key order); its hash identifies a run.
  std::string to_text() const;
  std::string hash() const;

  void validate(std::vector<std::string>& errors) const;
};

// One training sequence with per-position targets: position l predicts
// pos_items[l] (0 where there is no target) in context pos_ctxs[l] against
// the sampled negative neg_items[l].
struct TrainingExample {
  UserId user = 0;
  std::vector<ItemId> items;
  std::vector<ContextTuple> ctxs;
  std::vector<ItemId> pos_items;
  std::vector<ContextTuple> pos_ctxs;
  std::vector<ItemId> neg_items;
  std::vector<ItemId> fism_items;
};

enum class LossSide { kShort, kLong };

class MojitoModel {
 public:
  MojitoModel(const MojitoConfig& config, std::size_t n_items, std::size_t n_users);

  const MojitoConfig& config() const { return config_; }
  std::size_t n_items() const { return n_items_; }
  std::size_t n_users() const { return n_users_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  // Config snapshot embedded in checkpoints (config + table dimensions).
  std::string snapshot_text() const;
  static MojitoModel from_snapshot_text(const std::string& text);

  // X^(0): rows [item embedding ; fused context] + position embedding.
  Tensor build_input(const std::vector<ItemId>& items, const std::vector<ContextTuple>& ctxs,
                     const std::vector<Tensor>& context_tables) const;

  Tensor encode_input(const Tensor& x0, Rng* rng, RunMode mode,
                      std::vector<Tensor>* last_block_heads = nullptr) const {
    return encoder.encode(x0, rng, mode, last_block_heads, config_.no_context);
  }

  // Encoder output X^(B) for a padded prefix.
  Tensor encode_sequence(const PaddedSequence& prefix, Rng* rng, RunMode mode,
                         std::vector<Tensor>* last_block_heads = nullptr) const;

  // r_short = x_L^(B) . [m_v ; m_c]. The fused context of the target time can
  // be precomputed once per user when scoring many candidates.
  Tensor short_term_score(const Tensor& encoder_row, ItemId v, const Tensor& fused_ctx) const;
  Tensor short_term_score(const Tensor& encoder_row, ItemId v, const ContextTuple& c_next) const;

  Tensor long_term(UserId u, const std::vector<ItemId>& fism_items, ItemId v) const {
    return long_term_score(user_table, item_table, u, fism_items, v);
  }

  // lambda * r_short + (1 - lambda) * r_long for a single candidate.
  Tensor combined_score(UserId u, const PaddedSequence& prefix, ItemId v,
                        const ContextTuple& c_next, const std::vector<ItemId>& fism_items) const;

  // Combined scores of many candidates against one encoded prefix.
  std::vector<double> candidate_scores(UserId u, const PaddedSequence& prefix,
                                       const ContextTuple& c_next,
                                       const std::vector<ItemId>& candidates,
                                       const std::vector<ItemId>& fism_items) const;

  // Candidates ordered by combined score (desc), ties by ascending item id.
  std::vector<ItemId> predict_topk(UserId u, const PaddedSequence& prefix,
                                   const ContextTuple& c_next,
                                   const std::vector<ItemId>& candidates, std::size_t k,
                                   const std::vector<ItemId>& fism_items) const;

  Tensor item_table;      // (n_items+1) x d, row 0 frozen padding
  Tensor user_table;      // (n_users+1) x d
  Tensor position_table;  // L x 2d
  TemporalEmbedding temporal;
  EncoderStack encoder;

 private:
  MojitoConfig config_;
  std::size_t n_items_ = 0;
  std::size_t n_users_ = 0;
  ParameterStore params_;
};

// Negative-sampling cross-entropy for one side: sum over sequences and
// non-padding positions of -[log sig(r(v+)) + log(1 - sig(r(o-)))], with
// log arguments clamped.
Tensor sequence_loss(const MojitoModel& model, const std::vector<TrainingExample>& batch,
                     LossSide side, Rng& rng);

// Ranking position of the target among candidates under (score desc, id asc);
// 1-based.
int rank_of_target(const std::vector<double>& scores, const std::vector<ItemId>& ids,
                   ItemId target);

}  // namespace mojito
