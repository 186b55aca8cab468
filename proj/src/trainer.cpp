#include "mojito/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "mojito/checkpoint.hpp"
#include "mojito/evaluation.hpp"

namespace mojito {

namespace {

struct StaticRows {
  UserId user = 0;
  std::vector<ItemId> items;
  std::vector<ContextTuple> ctxs;
  std::vector<ItemId> pos_items;
  std::vector<ContextTuple> pos_ctxs;
  std::vector<ItemId> fism_pool;  // distinct train items
  std::size_t n_targets = 0;
};

void assert_mixture_simplex(const MojitoModel& model) {
  for (const MixtureAttentionBlock& blk : model.encoder.blocks) {
    for (int h = 0; h < blk.heads(); ++h) {
      const auto [p_it, p_c] = blk.mixture_weights(h);
      if (p_it < 0.0 || p_c < 0.0 || std::abs(p_it + p_c - 1.0) > 1e-12) {
        throw ContractError("mixture weights left the simplex after an optimizer step");
      }
    }
  }
}

}  // namespace

TrainResult train(MojitoModel& model, const SplitDataset& split, const EpochCallback& on_epoch) {
  const MojitoConfig& cfg = model.config();
  const auto L = static_cast<std::size_t>(cfg.seq_len);
  TrainResult result;

  // Static per-user rows: inputs are train[0..T-2] and targets train[1..T-1],
  // both right-aligned to L.
  std::vector<StaticRows> rows;
  rows.reserve(split.active_users.size());
  for (UserId u : split.active_users) {
    const UserSplit& us = split.users[static_cast<std::size_t>(u)];
    const std::size_t t = us.train.size();
    StaticRows r;
    r.user = u;
    r.fism_pool.reserve(t);
    for (const Event& e : us.train) r.fism_pool.push_back(e.item);
    std::sort(r.fism_pool.begin(), r.fism_pool.end());
    r.fism_pool.erase(std::unique(r.fism_pool.begin(), r.fism_pool.end()), r.fism_pool.end());
    if (t < 2) {
      ++result.users_without_pairs;
      continue;
    }
    const PaddedSequence in = pad_last_events(us.train, 0, t - 1, cfg.seq_len,
                                              split.schema.size());
    const PaddedSequence tgt = pad_last_events(us.train, 1, t - 1, cfg.seq_len,
                                               split.schema.size());
    r.items = in.items;
    r.ctxs = in.ctxs;
    r.pos_items = tgt.items;
    r.pos_ctxs = tgt.ctxs;
    for (ItemId v : r.pos_items) r.n_targets += v != 0 ? 1 : 0;
    rows.push_back(std::move(r));
  }

  Rng train_rng = Rng::derive(cfg.seed, 0x7124);
  const std::uint64_t val_seed = splitmix64(cfg.seed ^ 0x5eedULL);

  int epochs_since_best = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(rows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    train_rng.shuffle(order);

    double loss_sum = 0.0;
    std::size_t target_count = 0;
    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t end =
          std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch));
      std::vector<TrainingExample> batch;
      batch.reserve(end - begin);
      for (std::size_t i = begin; i < end; ++i) {
        const StaticRows& r = rows[order[i]];
        const UserSplit& us = split.users[static_cast<std::size_t>(r.user)];
        TrainingExample ex;
        ex.user = r.user;
        ex.items = r.items;
        ex.ctxs = r.ctxs;
        ex.pos_items = r.pos_items;
        ex.pos_ctxs = r.pos_ctxs;
        ex.neg_items.assign(L, 0);
        for (std::size_t l = 0; l < L; ++l) {
          if (ex.pos_items[l] != 0) {
            ex.neg_items[l] = sample_negative(train_rng, us.history,
                                              static_cast<ItemId>(split.n_items));
          }
        }
        ex.fism_items = sample_fism_items(train_rng, r.fism_pool,
                                          static_cast<std::size_t>(cfg.fism_n));
        target_count += r.n_targets;
        batch.push_back(std::move(ex));
      }
      if (batch.empty()) continue;

      Tensor loss;
      if (cfg.lambda == 1.0) {
        loss = sequence_loss(model, batch, LossSide::kShort, train_rng);
      } else if (cfg.lambda == 0.0) {
        loss = sequence_loss(model, batch, LossSide::kLong, train_rng);
      } else {
        Tensor ls = sequence_loss(model, batch, LossSide::kShort, train_rng);
        Tensor ll = sequence_loss(model, batch, LossSide::kLong, train_rng);
        loss = add(scale_const(ls, cfg.lambda), scale_const(ll, 1.0 - cfg.lambda));
      }
      const double loss_value = loss.scalar_value();
      if (!std::isfinite(loss_value)) {
        std::string users;
        for (const TrainingExample& ex : batch) users += " " + std::to_string(ex.user);
        std::cerr << "non-finite loss " << loss_value << " in epoch " << epoch
                  << "; batch users:" << users << "\n";
        throw ContractError("training aborted on non-finite loss (epoch " +
                            std::to_string(epoch) + ")");
      }
      loss_sum += loss_value;
      backward(loss);
      adam_step(model.params(), cfg.lr);
      assert_mixture_simplex(model);
    }

    EvalReport val = evaluate(model, split, EvalSplit::kVal, val_seed);
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = target_count > 0 ? loss_sum / static_cast<double>(target_count) : 0.0;
    log.val_ndcg10 = val.ndcg10;
    log.val_hr10 = val.hr10;
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);

    if (result.best_epoch == 0 || val.ndcg10 > result.best_val_ndcg10) {
      result.best_epoch = epoch;
      result.best_val_ndcg10 = val.ndcg10;
      result.best_val_hr10 = val.hr10;
      result.best_checkpoint = serialize_checkpoint(model.params(), model.snapshot_text());
      epochs_since_best = 0;
    } else {
      ++epochs_since_best;
      if (cfg.patience > 0 && epochs_since_best >= cfg.patience) {
        result.early_stopped = true;
        break;
      }
    }
  }
  if (result.best_checkpoint.empty()) {
    result.best_checkpoint = serialize_checkpoint(model.params(), model.snapshot_text());
  }
  return result;
}

}  // namespace mojito
