#pragma once

// Controlled synthetic datasets with known temporal or sequential structure:
// the context variant draws each event's item from the pool of the current
// calendar-context value, the markov variant follows a deterministic
// successor function. Both are seeded and fully reproducible.

#include <string>
#include <vector>

#include "mojito/dataio.hpp"

namespace mojito {

struct SyntheticSpec {
  enum class Kind { kContext, kMarkov };

  Kind kind = Kind::kContext;
  int n_users = 100;
  int n_items = 50;
  int events_per_user = 50;
  std::string driver = "day_of_week";  // context type steering the pools
  // pools[v] = items of driver value v; values may share a subset, distinct
  // subsets must be disjoint. Filled by parse (pools=even or pool.<v>=lo-hi).
  std::vector<std::vector<ItemId>> pools;
  double noise = 0.0;
  std::uint64_t seed = 1;
  std::int64_t stride_seconds = 21600;       // 6 hours
  std::int64_t stride_jitter_seconds = 0;    // extra uniform [0, jitter] per step

  static SyntheticSpec parse(const std::string& text);
  void validate() const;

  // Evenly partitions items 1..n_items into contiguous pools, one per value.
  void make_even_pools();
  int driver_cardinality() const;
};

// Context-driven events (spec.kind must be kContext).
std::vector<RawEvent> generate(const SyntheticSpec& spec);

// Markov events: next item = successor(prev) = prev % n_items + 1, replaced
// by a uniform item with probability noise.
std::vector<RawEvent> markov_variant(const SyntheticSpec& spec);

// Dispatch on spec.kind.
std::vector<RawEvent> generate_events(const SyntheticSpec& spec);

// Analytic lower bound on HR@10 for a Bayes context-aware scorer on
// generate() data: (1 - noise) * E[min(1, 10 / (K + 1))] with K binomial over
// the sampled negatives landing in the target's pool. Logged as the
// experiment ceiling.
double bayes_ceiling_hr10(const SyntheticSpec& spec, std::size_t n_negatives = 1000);

std::string events_to_tsv(const std::vector<RawEvent>& events);

}  // namespace mojito
