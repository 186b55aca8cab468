#pragma once

// Training loop: per epoch, shuffle users, build batches with one fresh
// negative per position and a fresh FISM sample per sequence, minimize the
// lambda-combined loss with Adam, evaluate on validation, and keep the
// best-NDCG@10 checkpoint. Early-stops after `patience` epochs without
// improvement.

#include <functional>
#include <string>
#include <vector>

#include "mojito/dataio.hpp"
#include "mojito/model.hpp"

namespace mojito {

struct EpochLog {
  int epoch = 0;           // 1-based
  double train_loss = 0.0; // mean loss per supervised position
  double val_ndcg10 = 0.0;
  double val_hr10 = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  int best_epoch = 0;
  double best_val_ndcg10 = 0.0;
  double best_val_hr10 = 0.0;
  std::string best_checkpoint;  // serialized checkpoint bytes at the best epoch
  std::size_t users_without_pairs = 0;
  bool early_stopped = false;
};

using EpochCallback = std::function<void(const EpochLog&)>;

TrainResult train(MojitoModel& model, const SplitDataset& split,
                  const EpochCallback& on_epoch = nullptr);

}  // namespace mojito
