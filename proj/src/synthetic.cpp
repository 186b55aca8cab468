#include "mojito/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "mojito/util.hpp"

namespace mojito {

int SyntheticSpec::driver_cardinality() const {
  return ContextSchema::parse(driver).types().at(0).cardinality;
}

void SyntheticSpec::make_even_pools() {
  const int p = driver_cardinality();
  pools.assign(static_cast<std::size_t>(p), {});
  const int base = n_items / p;
  int next = 1;
  for (int v = 0; v < p; ++v) {
    const int size = base + (v < n_items % p ? 1 : 0);
    for (int i = 0; i < size; ++i) pools[static_cast<std::size_t>(v)].push_back(next++);
  }
}

void SyntheticSpec::validate() const {
  if (n_users < 1 || n_items < 1 || events_per_user < 1) {
    throw DomainError("synthetic spec: counts must be positive");
  }
  if (noise < 0.0 || noise > 1.0) throw DomainError("synthetic spec: noise must be in [0,1]");
  if (stride_seconds < 1 || stride_jitter_seconds < 0) {
    throw DomainError("synthetic spec: bad stride");
  }
  if (kind == Kind::kContext) {
    const int p = driver_cardinality();
    if (static_cast<int>(pools.size()) != p) {
      throw DomainError("synthetic spec: need one pool per driver value (" + std::to_string(p) +
                        ")");
    }
    std::set<std::vector<ItemId>> distinct;
    for (const auto& pool : pools) {
      if (pool.empty()) throw DomainError("synthetic spec: empty pool");
      for (ItemId i : pool) {
        if (i < 1 || i > n_items) throw DomainError("synthetic spec: pool item out of range");
      }
      distinct.insert(pool);
    }
    // distinct subsets must be disjoint
    std::set<ItemId> seen;
    for (const auto& pool : distinct) {
      for (ItemId i : pool) {
        if (!seen.insert(i).second) {
          throw DomainError("synthetic spec: pools overlap on item " + std::to_string(i));
        }
      }
    }
  }
}

SyntheticSpec SyntheticSpec::parse(const std::string& text) {
  SyntheticSpec spec;
  std::map<int, std::vector<ItemId>> explicit_pools;
  bool even_pools = false;
  std::vector<std::string> bad_keys;
  for (const std::string& raw : split_string(text, '\n')) {
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      bad_keys.push_back(line);
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "kind") {
        if (value == "context") {
          spec.kind = Kind::kContext;
        } else if (value == "markov") {
          spec.kind = Kind::kMarkov;
        } else {
          bad_keys.push_back(key + "=" + value);
        }
      } else if (key == "n_users") {
        spec.n_users = std::stoi(value);
      } else if (key == "n_items") {
        spec.n_items = std::stoi(value);
      } else if (key == "events_per_user") {
        spec.events_per_user = std::stoi(value);
      } else if (key == "driver") {
        ContextSchema::parse(value);
        spec.driver = value;
      } else if (key == "noise") {
        spec.noise = std::stod(value);
      } else if (key == "seed") {
        spec.seed = std::stoull(value);
      } else if (key == "stride_seconds") {
        spec.stride_seconds = std::stoll(value);
      } else if (key == "stride_jitter_seconds") {
        spec.stride_jitter_seconds = std::stoll(value);
      } else if (key == "pools") {
        if (value == "even") {
          even_pools = true;
        } else {
          bad_keys.push_back(key + "=" + value);
        }
      } else if (key.rfind("pool.", 0) == 0) {
        const int v = std::stoi(key.substr(5));
        const std::size_t dash = value.find('-');
        if (dash == std::string::npos) throw FormatError("expected lo-hi");
        const ItemId lo = std::stoll(value.substr(0, dash));
        const ItemId hi = std::stoll(value.substr(dash + 1));
        std::vector<ItemId> pool;
        for (ItemId i = lo; i <= hi; ++i) pool.push_back(i);
        explicit_pools[v] = std::move(pool);
      } else {
        bad_keys.push_back(key);
      }
    } catch (const std::exception&) {
      bad_keys.push_back(key + "=" + value);
    }
  }
  if (!bad_keys.empty()) {
    std::string msg = "invalid synthetic spec keys:";
    for (const std::string& k : bad_keys) msg += " " + k;
    throw FormatError(msg);
  }
  if (spec.kind == Kind::kContext) {
    if (!explicit_pools.empty()) {
      spec.pools.assign(static_cast<std::size_t>(spec.driver_cardinality()), {});
      for (const auto& [v, pool] : explicit_pools) {
        if (v < 0 || v >= spec.driver_cardinality()) {
          throw FormatError("pool value " + std::to_string(v) + " out of driver range");
        }
        spec.pools[static_cast<std::size_t>(v)] = pool;
      }
    } else if (even_pools || spec.pools.empty()) {
      spec.make_even_pools();
    }
  }
  spec.validate();
  return spec;
}

namespace {

std::string user_name(int u) { return "u" + std::to_string(u); }
std::string item_name(ItemId i) { return "i" + std::to_string(i); }

std::int64_t next_ts(std::int64_t ts, const SyntheticSpec& spec, Rng& rng) {
  std::int64_t step = spec.stride_seconds;
  if (spec.stride_jitter_seconds > 0) step += rng.uniform_int(0, spec.stride_jitter_seconds);
  return ts + step;
}

}  // namespace

std::vector<RawEvent> generate(const SyntheticSpec& spec) {
  if (spec.kind != SyntheticSpec::Kind::kContext) {
    throw ContractError("generate: spec kind is not 'context'");
  }
  spec.validate();
  const ContextSchema driver_schema = ContextSchema::parse(spec.driver);
  std::vector<RawEvent> events;
  events.reserve(static_cast<std::size_t>(spec.n_users) *
                 static_cast<std::size_t>(spec.events_per_user));
  for (int u = 1; u <= spec.n_users; ++u) {
    // per-user stream: a user's events depend only on (seed, user id)
    Rng rng = Rng::derive(spec.seed, static_cast<std::uint64_t>(u));
    std::int64_t ts = rng.uniform_int(0, 28 * 86400 - 1);  // random phase
    for (int e = 0; e < spec.events_per_user; ++e) {
      const int value = derive_context(ts, driver_schema)[0];
      ItemId item;
      if (spec.noise > 0.0 && rng.uniform01() < spec.noise) {
        item = rng.uniform_int(1, spec.n_items);
      } else {
        const auto& pool = spec.pools[static_cast<std::size_t>(value)];
        item = pool[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1))];
      }
      events.push_back({user_name(u), item_name(item), ts});
      ts = next_ts(ts, spec, rng);
    }
  }
  return events;
}

std::vector<RawEvent> markov_variant(const SyntheticSpec& spec) {
  spec.validate();
  std::vector<RawEvent> events;
  events.reserve(static_cast<std::size_t>(spec.n_users) *
                 static_cast<std::size_t>(spec.events_per_user));
  for (int u = 1; u <= spec.n_users; ++u) {
    Rng rng = Rng::derive(spec.seed, static_cast<std::uint64_t>(u));
    std::int64_t ts = rng.uniform_int(0, 28 * 86400 - 1);
    ItemId cur = rng.uniform_int(1, spec.n_items);
    for (int e = 0; e < spec.events_per_user; ++e) {
      events.push_back({user_name(u), item_name(cur), ts});
      ts = next_ts(ts, spec, rng);
      if (spec.noise > 0.0 && rng.uniform01() < spec.noise) {
        cur = rng.uniform_int(1, spec.n_items);
      } else {
        cur = cur % spec.n_items + 1;
      }
    }
  }
  return events;
}

std::vector<RawEvent> generate_events(const SyntheticSpec& spec) {
  return spec.kind == SyntheticSpec::Kind::kContext ? generate(spec) : markov_variant(spec);
}

double bayes_ceiling_hr10(const SyntheticSpec& spec, std::size_t n_negatives) {
  if (spec.kind != SyntheticSpec::Kind::kContext) {
    throw ContractError("bayes_ceiling_hr10 applies to context-driven data");
  }
  double mean_pool = 0.0;
  for (const auto& pool : spec.pools) mean_pool += static_cast<double>(pool.size());
  mean_pool /= static_cast<double>(spec.pools.size());
  const double q = mean_pool / static_cast<double>(spec.n_items);  // P(negative in pool)
  const std::size_t n = std::min(n_negatives, static_cast<std::size_t>(spec.n_items) - 1);
  if (q >= 1.0) {
    return (1.0 - spec.noise) * std::min(1.0, 10.0 / static_cast<double>(n + 1));
  }

  // E[min(1, 10 / (K+1))], K ~ Binomial(n, q), via the pmf recurrence.
  double pmf = std::pow(1.0 - q, static_cast<double>(n));  // P(K = 0)
  double expectation = 0.0;
  for (std::size_t k = 0; k <= n; ++k) {
    expectation += pmf * std::min(1.0, 10.0 / static_cast<double>(k + 1));
    if (k < n) {
      pmf *= (static_cast<double>(n - k) / static_cast<double>(k + 1)) * (q / (1.0 - q));
    }
  }
  return (1.0 - spec.noise) * expectation;
}

std::string events_to_tsv(const std::vector<RawEvent>& events) {
  std::string out;
  for (const RawEvent& e : events) {
    out += e.user + "\t" + e.item + "\t" + std::to_string(e.timestamp) + "\n";
  }
  return out;
}

}  // namespace mojito
