#pragma once

// Event ingestion and preprocessing: parsing delimiter-separated interaction
// logs, recursive k-core filtering, calendar context derivation (UTC),
// fixed-length padded sequences, leave-one-out splits, and the negative /
// FISM item samplers.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mojito/rng.hpp"
#include "mojito/tensor.hpp"

namespace mojito {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using ItemId = std::int64_t;
using UserId = std::int64_t;
using ContextTuple = std::vector<int>;

struct RawEvent {
  std::string user;
  std::string item;
  std::int64_t timestamp = 0;  // seconds since epoch, UTC
};

// -- context schema -----------------------------------------------------------

struct ContextType {
  std::string name;
  int cardinality = 0;
};

// Ordered list of calendar context types. Supported names: month (12),
// day_of_month (31), day_of_week (7), hour (24). Values are 0-based;
// day_of_week has Monday = 0.
class ContextSchema {
 public:
  ContextSchema() = default;
  static ContextSchema parse(const std::string& comma_separated);
  static ContextSchema default_schema();  // month,day_of_month,day_of_week,hour

  const std::vector<ContextType>& types() const { return types_; }
  std::size_t size() const { return types_.size(); }
  std::string to_string() const;

 private:
  std::vector<ContextType> types_;
};

// Calendar context tuple of a UTC timestamp under the schema.
ContextTuple derive_context(std::int64_t timestamp, const ContextSchema& schema);

// -- loading ------------------------------------------------------------------

struct ColumnMap {
  int user = 0;
  int item = 1;
  int time = 2;
};

struct LoadResult {
  std::vector<RawEvent> events;
  std::size_t malformed_rows = 0;
  std::vector<std::string> sample_bad_lines;
};

// Splits each line on `delimiter` (multi-character delimiters such as "::"
// are allowed) and reads the mapped columns. Malformed rows are counted and
// skipped; more than 1% malformed rows is a FormatError quoting samples.
LoadResult load_events(const std::string& path, const std::string& delimiter,
                       const ColumnMap& columns);

// -- k-core -------------------------------------------------------------------

struct KCoreResult {
  std::vector<RawEvent> events;
  bool empty_result = false;  // legal, but worth flagging
};

// Maximal subset in which every user has >= k_user events and every item has
// >= k_item events (the unique fixed point of alternating pruning).
KCoreResult k_core_filter(const std::vector<RawEvent>& events, int k_user, int k_item);

// -- indexed dataset ----------------------------------------------------------

struct Event {
  ItemId item = 0;
  std::int64_t ts = 0;
  ContextTuple ctx;
};

struct Dataset {
  ContextSchema schema;
  // index -> original id; slot 0 is the padding/reserved slot
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;
  // events[u] is user u's chronological events (ties keep input order)
  std::vector<std::vector<Event>> events;

  std::size_t n_users() const { return user_ids.size() - 1; }
  std::size_t n_items() const { return item_ids.size() - 1; }
};

// Indexes users/items (contiguous from 1, in first-appearance order), sorts
// each user's events by timestamp, and derives context tuples.
Dataset build_dataset(const std::vector<RawEvent>& events, const ContextSchema& schema);

// -- leave-one-out split --------------------------------------------------------

struct UserSplit {
  std::vector<Event> train;
  Event val;
  Event test;
  std::vector<ItemId> history;  // sorted distinct items over all events
  bool valid = false;           // false for users dropped (< 3 events)
};

struct SplitDataset {
  ContextSchema schema;
  std::size_t n_users = 0;  // ids 1..n_users
  std::size_t n_items = 0;  // ids 1..n_items
  std::vector<UserSplit> users;  // indexed by user id; slot 0 unused
  std::vector<UserId> active_users;
  std::size_t dropped_users = 0;
};

SplitDataset leave_one_out_split(const Dataset& dataset);

// -- padded sequences -----------------------------------------------------------

struct PaddedSequence {
  std::vector<ItemId> items;        // length L, left-padded with item 0
  std::vector<ContextTuple> ctxs;   // length L, padded with all-zero tuples
};

// Keeps the most recent L events right-aligned.
PaddedSequence pad_last_events(const std::vector<Event>& events, std::size_t begin,
                               std::size_t count, int L, std::size_t n_context_types);

struct BuiltSequences {
  std::vector<std::optional<PaddedSequence>> per_user;  // indexed by user id
  std::size_t excluded_users = 0;                       // users with no train events
};

BuiltSequences build_sequences(const SplitDataset& split, int L);

// -- samplers -------------------------------------------------------------------

// Uniform over {1..item_count} minus the (sorted) history; never padding.
ItemId sample_negative(Rng& rng, const std::vector<ItemId>& sorted_history, ItemId item_count);

struct EvalNegatives {
  std::vector<ItemId> items;
  bool exhausted = false;  // fewer than n eligible items existed
};

// n distinct non-interacted items (all eligible ones when fewer exist).
EvalNegatives sample_eval_negatives(Rng& rng, const std::vector<ItemId>& sorted_history,
                                    ItemId item_count, std::size_t n = 1000);

// N items from the user's history: without replacement when the history is
// large enough, otherwise uniform draws with replacement.
std::vector<ItemId> sample_fism_items(Rng& rng, const std::vector<ItemId>& history,
                                      std::size_t n);

// -- dataset directory (CLI surface) ---------------------------------------------

struct PreprocessStats {
  int k_user = 1;
  int k_item = 1;
  std::size_t events_before = 0, events_after = 0;
  std::size_t users_before = 0, users_after = 0;
  std::size_t items_before = 0, items_after = 0;
  std::size_t malformed_rows = 0;
  bool empty_result = false;
};

// Layout: user_index.tsv, item_index.tsv, sequences.tsv (user<TAB>item:ts,...)
// and stats.txt (key=value, includes the schema).
void write_dataset_dir(const std::string& dir, const Dataset& dataset,
                       const PreprocessStats& stats);

struct LoadedDataset {
  Dataset dataset;
  PreprocessStats stats;
};

LoadedDataset load_dataset_dir(const std::string& dir);

}  // namespace mojito
