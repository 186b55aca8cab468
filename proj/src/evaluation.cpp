#include "mojito/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <thread>

#include <json.hpp>

namespace mojito {

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["hr10"] = hr10;
  j["ndcg10"] = ndcg10;
  j["head_redundancy_mean"] = head_redundancy_mean;
  j["head_redundancy_std"] = head_redundancy_std;
  j["n_users"] = n_users;
  j["seed"] = seed;
  j["config_hash"] = config_hash;
  return j.dump(2) + "\n";
}

double hr_at_k(std::optional<int> rank, int k) {
  if (!rank.has_value()) return 0.0;
  if (*rank < 1) throw ContractError("hr_at_k: ranks are 1-based");
  return *rank <= k ? 1.0 : 0.0;
}

double ndcg_at_k(std::optional<int> rank, int k) {
  if (!rank.has_value()) return 0.0;
  if (*rank < 1) throw ContractError("ndcg_at_k: ranks are 1-based");
  if (*rank > k) return 0.0;
  return 1.0 / std::log2(static_cast<double>(*rank) + 1.0);
}

PaddedSequence eval_prefix(const SplitDataset& split, UserId u, EvalSplit which, int L) {
  const UserSplit& us = split.users.at(static_cast<std::size_t>(u));
  if (!us.valid) throw ContractError("eval_prefix: user was dropped by the split");
  std::vector<Event> events = us.train;
  if (which == EvalSplit::kTest) events.push_back(us.val);
  return pad_last_events(events, 0, events.size(), L, split.schema.size());
}

ModelScorer::ModelScorer(const MojitoModel& model, const SplitDataset& split) : model_(model) {
  train_pool_.resize(split.users.size());
  for (UserId u : split.active_users) {
    const UserSplit& us = split.users[static_cast<std::size_t>(u)];
    std::vector<ItemId>& pool = train_pool_[static_cast<std::size_t>(u)];
    pool.reserve(us.train.size());
    for (const Event& e : us.train) pool.push_back(e.item);
    std::sort(pool.begin(), pool.end());
    pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
  }
}

std::vector<double> ModelScorer::score(UserId u, const PaddedSequence& prefix,
                                       const ContextTuple& c_next,
                                       const std::vector<ItemId>& candidates,
                                       Rng& user_rng) const {
  const std::vector<ItemId>& pool = train_pool_.at(static_cast<std::size_t>(u));
  const std::vector<ItemId> fism =
      sample_fism_items(user_rng, pool, static_cast<std::size_t>(model_.config().fism_n));
  return model_.candidate_scores(u, prefix, c_next, candidates, fism);
}

PopularityScorer::PopularityScorer(const SplitDataset& split) {
  counts_.assign(split.n_items + 1, 0.0);
  for (UserId u : split.active_users) {
    for (const Event& e : split.users[static_cast<std::size_t>(u)].train) {
      counts_[static_cast<std::size_t>(e.item)] += 1.0;
    }
  }
}

std::vector<double> PopularityScorer::score(UserId, const PaddedSequence&, const ContextTuple&,
                                            const std::vector<ItemId>& candidates,
                                            Rng&) const {
  std::vector<double> out;
  out.reserve(candidates.size());
  for (ItemId v : candidates) out.push_back(counts_.at(static_cast<std::size_t>(v)));
  return out;
}

std::vector<double> RandomScorer::score(UserId, const PaddedSequence&, const ContextTuple&,
                                        const std::vector<ItemId>& candidates,
                                        Rng& user_rng) const {
  std::vector<double> out;
  out.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) out.push_back(user_rng.uniform01());
  return out;
}

std::size_t eval_thread_count(std::size_t n_tasks) {
  std::size_t n = std::thread::hardware_concurrency();
  if (const char* env = std::getenv("MOJITO_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) n = static_cast<std::size_t>(v);
  }
  if (n < 1) n = 1;
  return std::min(n, std::max<std::size_t>(n_tasks, 1));
}

EvalReport evaluate_with_scorer(const CandidateScorer& scorer, const SplitDataset& split,
                                EvalSplit which, int L, std::uint64_t eval_seed,
                                std::size_t n_negatives, const std::string& config_hash) {
  EvalReport report;
  report.seed = eval_seed;
  report.config_hash = config_hash;
  const std::vector<UserId>& users = split.active_users;
  report.n_users = users.size();
  report.ranks.assign(users.size(), 0);
  if (users.empty()) return report;

  const std::size_t n_threads = eval_thread_count(users.size());
  auto worker = [&](std::size_t begin, std::size_t end) {
    NoGradGuard guard;
    for (std::size_t i = begin; i < end; ++i) {
      const UserId u = users[i];
      const UserSplit& us = split.users[static_cast<std::size_t>(u)];
      Rng user_rng = Rng::derive(eval_seed, static_cast<std::uint64_t>(u));
      EvalNegatives negs = sample_eval_negatives(
          user_rng, us.history, static_cast<ItemId>(split.n_items), n_negatives);
      const Event& target = which == EvalSplit::kVal ? us.val : us.test;
      std::vector<ItemId> candidates;
      candidates.reserve(negs.items.size() + 1);
      candidates.push_back(target.item);
      candidates.insert(candidates.end(), negs.items.begin(), negs.items.end());
      const PaddedSequence prefix = eval_prefix(split, u, which, L);
      const std::vector<double> scores =
          scorer.score(u, prefix, target.ctx, candidates, user_rng);
      report.ranks[i] = rank_of_target(scores, candidates, target.item);
    }
  };

  if (n_threads <= 1) {
    worker(0, users.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (users.size() + n_threads - 1) / n_threads;
    for (std::size_t t = 0; t < n_threads; ++t) {
      const std::size_t begin = t * chunk;
      const std::size_t end = std::min(users.size(), begin + chunk);
      if (begin >= end) break;
      pool.emplace_back(worker, begin, end);
    }
    for (std::thread& t : pool) t.join();
  }

  double hr = 0.0, ndcg = 0.0;
  for (int r : report.ranks) {
    hr += hr_at_k(r, 10);
    ndcg += ndcg_at_k(r, 10);
  }
  report.hr10 = hr / static_cast<double>(users.size());
  report.ndcg10 = ndcg / static_cast<double>(users.size());
  return report;
}

EvalReport evaluate(const MojitoModel& model, const SplitDataset& split, EvalSplit which,
                    std::uint64_t eval_seed, std::size_t n_negatives) {
  ModelScorer scorer(model, split);
  EvalReport report = evaluate_with_scorer(scorer, split, which, model.config().seq_len,
                                           eval_seed, n_negatives, model.config().hash());
  if (model.config().heads >= 2 && !split.active_users.empty()) {
    std::vector<PaddedSequence> probes;
    const std::size_t n_probes = std::min<std::size_t>(32, split.active_users.size());
    for (std::size_t i = 0; i < n_probes; ++i) {
      probes.push_back(eval_prefix(split, split.active_users[i], which, model.config().seq_len));
    }
    const auto [mean, std_dev] = head_redundancy(model, probes);
    report.head_redundancy_mean = mean;
    report.head_redundancy_std = std_dev;
  }
  return report;
}

EvalReport popularity_baseline(const SplitDataset& split, EvalSplit which,
                               std::uint64_t eval_seed, int L, std::size_t n_negatives) {
  PopularityScorer scorer(split);
  return evaluate_with_scorer(scorer, split, which, L, eval_seed, n_negatives, "popularity");
}

std::pair<double, double> head_redundancy(const MojitoModel& model,
                                          const std::vector<PaddedSequence>& probes) {
  if (model.config().heads < 2) {
    throw ContractError("head_redundancy needs at least two heads");
  }
  if (probes.empty()) throw ContractError("head_redundancy: no probe sequences");
  NoGradGuard guard;
  std::vector<double> distances;
  for (const PaddedSequence& probe : probes) {
    std::vector<Tensor> heads;
    model.encode_sequence(probe, nullptr, RunMode::kInference, &heads);
    for (std::size_t a = 0; a < heads.size(); ++a) {
      for (std::size_t b = a + 1; b < heads.size(); ++b) {
        double sq = 0.0;
        for (std::size_t i = 0; i < heads[a].numel(); ++i) {
          const double dv = heads[a].values()[i] - heads[b].values()[i];
          sq += dv * dv;
        }
        distances.push_back(std::sqrt(sq) /
                            std::sqrt(static_cast<double>(heads[a].numel())));
      }
    }
  }
  double mean = 0.0;
  for (double d : distances) mean += d;
  mean /= static_cast<double>(distances.size());
  double var = 0.0;
  for (double d : distances) var += (d - mean) * (d - mean);
  var /= static_cast<double>(distances.size());
  return {mean, std::sqrt(var)};
}

std::string format_mean_std(double mean, double std_dev) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f ± %.2f", mean, std_dev);
  return buf;
}

}  // namespace mojito
