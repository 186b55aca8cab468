#include "mojito/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include "mojito/util.hpp"

namespace mojito {

namespace {

const std::map<std::string, int>& known_context_types() {
  static const std::map<std::string, int> kTypes = {
      {"month", 12}, {"day_of_month", 31}, {"day_of_week", 7}, {"hour", 24}};
  return kTypes;
}

// Howard Hinnant's civil-from-days; valid for all timestamps we accept.
struct CivilDate {
  int year;
  unsigned month;  // 1..12
  unsigned day;    // 1..31
};

CivilDate civil_from_days(std::int64_t z) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const auto doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  return {static_cast<int>(y + (m <= 2)), m, d};
}

std::vector<std::string> split_by_delimiter(const std::string& line, const std::string& delim) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t next = line.find(delim, pos);
    if (next == std::string::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, next - pos));
    pos = next + delim.size();
  }
  return out;
}

bool parse_int64(const std::string& s, std::int64_t& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  const char* begin = t.data();
  const char* end = t.data() + t.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

ContextSchema ContextSchema::parse(const std::string& comma_separated) {
  ContextSchema schema;
  for (const std::string& raw : split_string(comma_separated, ',')) {
    const std::string name = trim(raw);
    if (name.empty()) continue;
    auto it = known_context_types().find(name);
    if (it == known_context_types().end()) {
      throw FormatError("unknown context type '" + name + "'");
    }
    schema.types_.push_back({name, it->second});
  }
  if (schema.types_.empty()) {
    throw FormatError("context schema must name at least one type");
  }
  return schema;
}

ContextSchema ContextSchema::default_schema() {
  return parse("month,day_of_month,day_of_week,hour");
}

std::string ContextSchema::to_string() const {
  std::string out;
  for (std::size_t i = 0; i < types_.size(); ++i) {
    if (i) out += ",";
    out += types_[i].name;
  }
  return out;
}

ContextTuple derive_context(std::int64_t timestamp, const ContextSchema& schema) {
  if (timestamp < 0) throw DomainError("derive_context: negative timestamp");
  const std::int64_t days = timestamp / 86400;
  const std::int64_t secs = timestamp % 86400;
  const CivilDate date = civil_from_days(days);
  ContextTuple out;
  out.reserve(schema.size());
  for (const ContextType& t : schema.types()) {
    if (t.name == "month") {
      out.push_back(static_cast<int>(date.month) - 1);
    } else if (t.name == "day_of_month") {
      out.push_back(static_cast<int>(date.day) - 1);
    } else if (t.name == "day_of_week") {
      out.push_back(static_cast<int>((days + 3) % 7));  // 1970-01-01 was a Thursday; Monday = 0
    } else {  // hour
      out.push_back(static_cast<int>(secs / 3600));
    }
  }
  return out;
}

LoadResult load_events(const std::string& path, const std::string& delimiter,
                       const ColumnMap& columns) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open event file '" + path + "'");
  if (delimiter.empty()) throw FormatError("delimiter must be non-empty");

  const int max_col = std::max({columns.user, columns.item, columns.time});
  LoadResult result;
  std::size_t total_rows = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    ++total_rows;
    const std::vector<std::string> cols = split_by_delimiter(line, delimiter);
    std::int64_t ts = 0;
    const bool shape_ok = static_cast<int>(cols.size()) > max_col;
    const bool ts_ok = shape_ok && parse_int64(cols[static_cast<std::size_t>(columns.time)], ts) &&
                       ts >= 0;
    const bool ids_ok = shape_ok && !trim(cols[static_cast<std::size_t>(columns.user)]).empty() &&
                        !trim(cols[static_cast<std::size_t>(columns.item)]).empty();
    if (!shape_ok || !ts_ok || !ids_ok) {
      ++result.malformed_rows;
      if (result.sample_bad_lines.size() < 5) result.sample_bad_lines.push_back(line);
      continue;
    }
    result.events.push_back({trim(cols[static_cast<std::size_t>(columns.user)]),
                             trim(cols[static_cast<std::size_t>(columns.item)]), ts});
  }
  if (total_rows > 0 && result.malformed_rows * 100 > total_rows) {
    std::string msg = "more than 1% malformed rows (" + std::to_string(result.malformed_rows) +
                      " of " + std::to_string(total_rows) + ") in '" + path + "'; samples:";
    for (const std::string& s : result.sample_bad_lines) msg += "\n  " + s;
    throw FormatError(msg);
  }
  return result;
}

KCoreResult k_core_filter(const std::vector<RawEvent>& events, int k_user, int k_item) {
  if (k_user < 1 || k_item < 1) throw DomainError("k_core_filter: thresholds must be >= 1");
  std::vector<RawEvent> current = events;
  while (true) {
    std::unordered_map<std::string, int> user_count, item_count;
    for (const RawEvent& e : current) {
      ++user_count[e.user];
      ++item_count[e.item];
    }
    std::vector<RawEvent> next;
    next.reserve(current.size());
    for (const RawEvent& e : current) {
      if (user_count[e.user] >= k_user && item_count[e.item] >= k_item) next.push_back(e);
    }
    if (next.size() == current.size()) break;
    current = std::move(next);
  }
  KCoreResult result;
  result.empty_result = current.empty() && !events.empty();
  result.events = std::move(current);
  return result;
}

Dataset build_dataset(const std::vector<RawEvent>& events, const ContextSchema& schema) {
  Dataset ds;
  ds.schema = schema;
  ds.user_ids.push_back("");  // padding slot
  ds.item_ids.push_back("");
  std::unordered_map<std::string, UserId> user_index;
  std::unordered_map<std::string, ItemId> item_index;
  ds.events.emplace_back();  // slot 0

  for (const RawEvent& e : events) {
    auto [uit, unew] = user_index.try_emplace(e.user, static_cast<UserId>(ds.user_ids.size()));
    if (unew) {
      ds.user_ids.push_back(e.user);
      ds.events.emplace_back();
    }
    auto [iit, inew] = item_index.try_emplace(e.item, static_cast<ItemId>(ds.item_ids.size()));
    if (inew) ds.item_ids.push_back(e.item);
    Event ev;
    ev.item = iit->second;
    ev.ts = e.timestamp;
    ds.events[static_cast<std::size_t>(uit->second)].push_back(std::move(ev));
  }
  for (std::size_t u = 1; u < ds.events.size(); ++u) {
    auto& evs = ds.events[u];
    std::stable_sort(evs.begin(), evs.end(),
                     [](const Event& a, const Event& b) { return a.ts < b.ts; });
    for (Event& e : evs) e.ctx = derive_context(e.ts, schema);
  }
  return ds;
}

SplitDataset leave_one_out_split(const Dataset& dataset) {
  SplitDataset split;
  split.schema = dataset.schema;
  split.n_users = dataset.n_users();
  split.n_items = dataset.n_items();
  split.users.resize(split.n_users + 1);
  for (UserId u = 1; u <= static_cast<UserId>(split.n_users); ++u) {
    const auto& evs = dataset.events[static_cast<std::size_t>(u)];
    UserSplit& us = split.users[static_cast<std::size_t>(u)];
    us.history.reserve(evs.size());
    for (const Event& e : evs) us.history.push_back(e.item);
    std::sort(us.history.begin(), us.history.end());
    us.history.erase(std::unique(us.history.begin(), us.history.end()), us.history.end());
    if (evs.size() < 3) {
      ++split.dropped_users;
      continue;
    }
    us.valid = true;
    us.train.assign(evs.begin(), evs.end() - 2);
    us.val = evs[evs.size() - 2];
    us.test = evs[evs.size() - 1];
    split.active_users.push_back(u);
  }
  return split;
}

PaddedSequence pad_last_events(const std::vector<Event>& events, std::size_t begin,
                               std::size_t count, int L, std::size_t n_context_types) {
  if (L < 2) throw DomainError("pad_last_events: L must be >= 2");
  PaddedSequence seq;
  const auto len = static_cast<std::size_t>(L);
  seq.items.assign(len, 0);
  seq.ctxs.assign(len, ContextTuple(n_context_types, 0));
  const std::size_t take = std::min(count, len);
  const std::size_t src = begin + count - take;
  for (std::size_t i = 0; i < take; ++i) {
    const Event& e = events[src + i];
    seq.items[len - take + i] = e.item;
    seq.ctxs[len - take + i] = e.ctx;
  }
  return seq;
}

BuiltSequences build_sequences(const SplitDataset& split, int L) {
  BuiltSequences out;
  out.per_user.resize(split.users.size());
  for (std::size_t u = 1; u < split.users.size(); ++u) {
    const UserSplit& us = split.users[u];
    if (us.train.empty()) {
      ++out.excluded_users;
      continue;
    }
    out.per_user[u] =
        pad_last_events(us.train, 0, us.train.size(), L, split.schema.size());
  }
  return out;
}

ItemId sample_negative(Rng& rng, const std::vector<ItemId>& sorted_history, ItemId item_count) {
  if (item_count <= static_cast<ItemId>(sorted_history.size())) {
    throw DomainError("sample_negative: no eligible items (item_count " +
                      std::to_string(item_count) + ", history " +
                      std::to_string(sorted_history.size()) + ")");
  }
  while (true) {
    const ItemId candidate = rng.uniform_int(1, item_count);
    if (!std::binary_search(sorted_history.begin(), sorted_history.end(), candidate)) {
      return candidate;
    }
  }
}

EvalNegatives sample_eval_negatives(Rng& rng, const std::vector<ItemId>& sorted_history,
                                    ItemId item_count, std::size_t n) {
  EvalNegatives out;
  std::size_t in_range = 0;
  for (ItemId h : sorted_history) {
    if (h >= 1 && h <= item_count) ++in_range;
  }
  const std::size_t eligible = static_cast<std::size_t>(item_count) - in_range;
  if (eligible <= n) {
    out.exhausted = eligible < n;
    out.items.reserve(eligible);
    for (ItemId i = 1; i <= item_count; ++i) {
      if (!std::binary_search(sorted_history.begin(), sorted_history.end(), i)) {
        out.items.push_back(i);
      }
    }
    return out;
  }
  if (eligible < 2 * n) {
    // Materialize and partially shuffle; rejection would stall near exhaustion.
    std::vector<ItemId> pool;
    pool.reserve(eligible);
    for (ItemId i = 1; i <= item_count; ++i) {
      if (!std::binary_search(sorted_history.begin(), sorted_history.end(), i)) {
        pool.push_back(i);
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto j = static_cast<std::size_t>(
          rng.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(pool.size() - 1)));
      std::swap(pool[i], pool[j]);
      out.items.push_back(pool[i]);
    }
    return out;
  }
  std::unordered_set<ItemId> used;
  used.reserve(n * 2);
  while (out.items.size() < n) {
    const ItemId candidate = rng.uniform_int(1, item_count);
    if (std::binary_search(sorted_history.begin(), sorted_history.end(), candidate)) continue;
    if (used.insert(candidate).second) out.items.push_back(candidate);
  }
  return out;
}

std::vector<ItemId> sample_fism_items(Rng& rng, const std::vector<ItemId>& history,
                                      std::size_t n) {
  if (history.empty()) throw DomainError("sample_fism_items: empty history");
  std::vector<ItemId> out;
  out.reserve(n);
  if (history.size() >= n) {
    std::vector<ItemId> pool = history;
    for (std::size_t i = 0; i < n; ++i) {
      const auto j = static_cast<std::size_t>(
          rng.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(pool.size() - 1)));
      std::swap(pool[i], pool[j]);
      out.push_back(pool[i]);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      out.push_back(history[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(history.size() - 1)))]);
    }
  }
  return out;
}

void write_dataset_dir(const std::string& dir, const Dataset& dataset,
                       const PreprocessStats& stats) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  std::string users;
  for (std::size_t u = 1; u < dataset.user_ids.size(); ++u) {
    users += std::to_string(u) + "\t" + dataset.user_ids[u] + "\n";
  }
  atomic_write_file(dir + "/user_index.tsv", users);

  std::string items;
  for (std::size_t i = 1; i < dataset.item_ids.size(); ++i) {
    items += std::to_string(i) + "\t" + dataset.item_ids[i] + "\n";
  }
  atomic_write_file(dir + "/item_index.tsv", items);

  std::string seqs;
  for (std::size_t u = 1; u < dataset.events.size(); ++u) {
    seqs += std::to_string(u) + "\t";
    const auto& evs = dataset.events[u];
    for (std::size_t i = 0; i < evs.size(); ++i) {
      if (i) seqs += ",";
      seqs += std::to_string(evs[i].item) + ":" + std::to_string(evs[i].ts);
    }
    seqs += "\n";
  }
  atomic_write_file(dir + "/sequences.tsv", seqs);

  std::string st;
  st += "schema=" + dataset.schema.to_string() + "\n";
  st += "k_user=" + std::to_string(stats.k_user) + "\n";
  st += "k_item=" + std::to_string(stats.k_item) + "\n";
  st += "events_before=" + std::to_string(stats.events_before) + "\n";
  st += "events_after=" + std::to_string(stats.events_after) + "\n";
  st += "users_before=" + std::to_string(stats.users_before) + "\n";
  st += "users_after=" + std::to_string(stats.users_after) + "\n";
  st += "items_before=" + std::to_string(stats.items_before) + "\n";
  st += "items_after=" + std::to_string(stats.items_after) + "\n";
  st += "malformed_rows=" + std::to_string(stats.malformed_rows) + "\n";
  st += "empty_result=" + std::string(stats.empty_result ? "1" : "0") + "\n";
  atomic_write_file(dir + "/stats.txt", st);
}

LoadedDataset load_dataset_dir(const std::string& dir) {
  LoadedDataset out;
  std::map<std::string, std::string> kv;
  for (const std::string& line : split_string(read_file(dir + "/stats.txt"), '\n')) {
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  if (!kv.count("schema")) throw FormatError("stats.txt in '" + dir + "' lacks a schema");
  out.dataset.schema = ContextSchema::parse(kv["schema"]);
  auto geti = [&](const char* key, auto& field) {
    if (kv.count(key)) field = static_cast<std::decay_t<decltype(field)>>(std::stoll(kv[key]));
  };
  geti("k_user", out.stats.k_user);
  geti("k_item", out.stats.k_item);
  geti("events_before", out.stats.events_before);
  geti("events_after", out.stats.events_after);
  geti("users_before", out.stats.users_before);
  geti("users_after", out.stats.users_after);
  geti("items_before", out.stats.items_before);
  geti("items_after", out.stats.items_after);
  geti("malformed_rows", out.stats.malformed_rows);
  out.stats.empty_result = kv.count("empty_result") && kv["empty_result"] == "1";

  auto read_index = [](const std::string& path, std::vector<std::string>& ids) {
    ids.clear();
    ids.push_back("");
    for (const std::string& line : split_string(read_file(path), '\n')) {
      if (trim(line).empty()) continue;
      const std::size_t tab = line.find('\t');
      if (tab == std::string::npos) throw FormatError("bad index line in '" + path + "'");
      const auto idx = static_cast<std::size_t>(std::stoll(line.substr(0, tab)));
      if (idx != ids.size()) throw FormatError("non-contiguous index in '" + path + "'");
      ids.push_back(line.substr(tab + 1));
    }
  };
  read_index(dir + "/user_index.tsv", out.dataset.user_ids);
  read_index(dir + "/item_index.tsv", out.dataset.item_ids);

  out.dataset.events.assign(out.dataset.user_ids.size(), {});
  for (const std::string& line : split_string(read_file(dir + "/sequences.tsv"), '\n')) {
    if (trim(line).empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) throw FormatError("bad sequence line in '" + dir + "'");
    const auto user = static_cast<std::size_t>(std::stoll(line.substr(0, tab)));
    if (user == 0 || user >= out.dataset.user_ids.size()) {
      throw FormatError("sequence line references unknown user " + std::to_string(user));
    }
    for (const std::string& tok : split_string(line.substr(tab + 1), ',')) {
      if (tok.empty()) continue;
      const std::size_t colon = tok.find(':');
      if (colon == std::string::npos) throw FormatError("bad item:ts token '" + tok + "'");
      Event e;
      e.item = std::stoll(tok.substr(0, colon));
      e.ts = std::stoll(tok.substr(colon + 1));
      if (e.item <= 0 || static_cast<std::size_t>(e.item) >= out.dataset.item_ids.size()) {
        throw FormatError("sequence references unknown item " + std::to_string(e.item));
      }
      e.ctx = derive_context(e.ts, out.dataset.schema);
      out.dataset.events[user].push_back(std::move(e));
    }
  }
  for (auto& evs : out.dataset.events) {
    std::stable_sort(evs.begin(), evs.end(),
                     [](const Event& a, const Event& b) { return a.ts < b.ts; });
  }
  return out;
}

}  // namespace mojito
