#pragma once

// Leave-one-out ranking evaluation (HR@10 / NDCG@10 against 1K sampled
// negatives) and the attention-head redundancy diagnostic. Scoring is
// read-only and parallelized across users; per-user rng streams derived from
// the evaluation seed keep results independent of the thread count.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mojito/dataio.hpp"
#include "mojito/model.hpp"

namespace mojito {

enum class EvalSplit { kVal, kTest };

struct EvalReport {
  double hr10 = 0.0;
  double ndcg10 = 0.0;
  std::vector<int> ranks;  // per active user, 1-based
  double head_redundancy_mean = 0.0;
  double head_redundancy_std = 0.0;
  std::size_t n_users = 0;
  std::uint64_t seed = 0;
  std::string config_hash;

  std::string to_json() const;
};

// 1 if the (1-based) rank is within the top k. A missing rank counts 0;
// rank 0 is a contract violation.
double hr_at_k(std::optional<int> rank, int k);
// 1 / log2(rank + 1) within the top k (one relevant item, ideal DCG = 1).
double ndcg_at_k(std::optional<int> rank, int k);

// Evaluation prefix of a user: the train sequence for the validation split,
// train + validation item for the test split.
PaddedSequence eval_prefix(const SplitDataset& split, UserId u, EvalSplit which, int L);

class CandidateScorer {
 public:
  virtual ~CandidateScorer() = default;
  virtual std::vector<double> score(UserId u, const PaddedSequence& prefix,
                                    const ContextTuple& c_next,
                                    const std::vector<ItemId>& candidates,
                                    Rng& user_rng) const = 0;
};

// Combined-score MOJITO scorer; samples the FISM set from the user's training
// items with the per-user rng.
class ModelScorer : public CandidateScorer {
 public:
  ModelScorer(const MojitoModel& model, const SplitDataset& split);
  std::vector<double> score(UserId u, const PaddedSequence& prefix, const ContextTuple& c_next,
                            const std::vector<ItemId>& candidates,
                            Rng& user_rng) const override;

 private:
  const MojitoModel& model_;
  std::vector<std::vector<ItemId>> train_pool_;  // distinct train items per user
};

// Scores every candidate by its training-set interaction count.
class PopularityScorer : public CandidateScorer {
 public:
  explicit PopularityScorer(const SplitDataset& split);
  std::vector<double> score(UserId u, const PaddedSequence& prefix, const ContextTuple& c_next,
                            const std::vector<ItemId>& candidates,
                            Rng& user_rng) const override;

 private:
  std::vector<double> counts_;
};

// Uniform-random scores; the evaluation-protocol calibration yardstick.
class RandomScorer : public CandidateScorer {
 public:
  std::vector<double> score(UserId u, const PaddedSequence& prefix, const ContextTuple& c_next,
                            const std::vector<ItemId>& candidates,
                            Rng& user_rng) const override;
};

// Shared protocol: per user, candidates = target + sampled negatives, rank by
// score (ties by ascending id), average HR@10 / NDCG@10.
EvalReport evaluate_with_scorer(const CandidateScorer& scorer, const SplitDataset& split,
                                EvalSplit which, int L, std::uint64_t eval_seed,
                                std::size_t n_negatives = 1000,
                                const std::string& config_hash = "");

// Full MOJITO evaluation; also fills the head-redundancy fields when the
// model has at least two heads.
EvalReport evaluate(const MojitoModel& model, const SplitDataset& split, EvalSplit which,
                    std::uint64_t eval_seed, std::size_t n_negatives = 1000);

EvalReport popularity_baseline(const SplitDataset& split, EvalSplit which,
                               std::uint64_t eval_seed, int L,
                               std::size_t n_negatives = 1000);

// Mean and population standard deviation of pairwise L2 distances between
// per-head outputs at the last block (inference mode), each distance
// normalized by sqrt(vector length). Needs H >= 2.
std::pair<double, double> head_redundancy(const MojitoModel& model,
                                          const std::vector<PaddedSequence>& probes);

// "mean +/- std" with two decimals, the reporting style of the diagnostic.
std::string format_mean_std(double mean, double std_dev);

// Thread count for evaluation: MOJITO_THREADS when set, else hardware
// concurrency, capped at the user count.
std::size_t eval_thread_count(std::size_t n_tasks);

}  // namespace mojito
