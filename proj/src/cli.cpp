#include "mojito/cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "mojito/checkpoint.hpp"
#include "mojito/evaluation.hpp"
#include "mojito/model.hpp"
#include "mojito/synthetic.hpp"
#include "mojito/trainer.hpp"
#include "mojito/util.hpp"

namespace mojito::cli {

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

nlohmann::ordered_json stats_json(const PreprocessStats& s) {
  nlohmann::ordered_json j;
  j["k_user"] = s.k_user;
  j["k_item"] = s.k_item;
  j["events_before"] = s.events_before;
  j["events_after"] = s.events_after;
  j["users_before"] = s.users_before;
  j["users_after"] = s.users_after;
  j["items_before"] = s.items_before;
  j["items_after"] = s.items_after;
  j["malformed_rows"] = s.malformed_rows;
  j["empty_result"] = s.empty_result;
  return j;
}

void write_manifest(const std::string& path, nlohmann::ordered_json manifest) {
  atomic_write_file(path, manifest.dump(2) + "\n");
}

struct PreprocessOpts {
  std::string input;
  std::string out_dir;
  int k_user = 1;
  int k_item = 1;
  std::string schema = "month,day_of_month,day_of_week,hour";
  std::string delimiter = "\t";
  int user_col = 0;
  int item_col = 1;
  int time_col = 2;
  bool force = false;
};

int run_preprocess(const PreprocessOpts& opts) {
  const auto start = Clock::now();
  if (fs::exists(opts.out_dir) && !fs::is_empty(opts.out_dir) && !opts.force) {
    std::cerr << "refusing to overwrite existing dataset directory '" << opts.out_dir
              << "' (use --force)\n";
    return 1;
  }
  if (opts.delimiter.empty()) {
    std::cerr << "delimiter must be non-empty\n";
    return 1;
  }
  std::string delim = opts.delimiter;
  if (delim == "\\t") delim = "\t";

  ColumnMap columns;
  columns.user = opts.user_col;
  columns.item = opts.item_col;
  columns.time = opts.time_col;
  LoadResult loaded = load_events(opts.input, delim, columns);

  PreprocessStats stats;
  stats.k_user = opts.k_user;
  stats.k_item = opts.k_item;
  stats.malformed_rows = loaded.malformed_rows;
  stats.events_before = loaded.events.size();
  {
    std::set<std::string> users, items;
    for (const RawEvent& e : loaded.events) {
      users.insert(e.user);
      items.insert(e.item);
    }
    stats.users_before = users.size();
    stats.items_before = items.size();
  }

  KCoreResult core = k_core_filter(loaded.events, opts.k_user, opts.k_item);
  stats.empty_result = core.empty_result;
  if (core.empty_result) {
    std::cerr << "warning: k-core filtering removed every event\n";
  }
  Dataset ds = build_dataset(core.events, ContextSchema::parse(opts.schema));
  stats.events_after = core.events.size();
  stats.users_after = ds.n_users();
  stats.items_after = ds.n_items();

  write_dataset_dir(opts.out_dir, ds, stats);

  std::cout << "events: " << stats.events_before << " -> " << stats.events_after << "\n"
            << "users:  " << stats.users_before << " -> " << stats.users_after << "\n"
            << "items:  " << stats.items_before << " -> " << stats.items_after << "\n"
            << "malformed rows skipped: " << stats.malformed_rows << "\n";

  nlohmann::ordered_json manifest;
  manifest["command"] = "preprocess";
  manifest["input"] = opts.input;
  manifest["schema"] = opts.schema;
  manifest["dataset_stats"] = stats_json(stats);
  manifest["out_dir"] = opts.out_dir;
  manifest["timings_ms"] = {{"total", ms_since(start)}};
  write_manifest(opts.out_dir + "/manifest.json", manifest);
  return 0;
}

struct TrainOpts {
  std::string data_dir;
  std::string config_path;
  std::string out_dir;
  bool no_context = false;
};

int run_train(const TrainOpts& opts) {
  const auto start = Clock::now();
  LoadedDataset loaded = load_dataset_dir(opts.data_dir);

  std::string config_text = opts.config_path.empty() ? "" : read_file(opts.config_path);
  const bool schema_given = config_text.find("schema=") != std::string::npos;
  std::vector<std::string> errors, notices;
  MojitoConfig cfg = MojitoConfig::parse(config_text, errors, notices);
  if (!schema_given) {
    cfg.schema = loaded.dataset.schema.to_string();
    notices.push_back("schema not set; using the dataset schema " + cfg.schema);
  } else if (cfg.schema != loaded.dataset.schema.to_string()) {
    errors.push_back("config schema '" + cfg.schema + "' does not match the dataset schema '" +
                     loaded.dataset.schema.to_string() + "'");
  }
  if (opts.no_context) cfg.no_context = true;
  cfg.validate(errors);
  if (!errors.empty()) {
    std::cerr << "invalid configuration:\n";
    for (const std::string& e : errors) std::cerr << "  - " << e << "\n";
    return 1;
  }
  for (const std::string& n : notices) std::cout << "notice: " << n << "\n";

  SplitDataset split = leave_one_out_split(loaded.dataset);
  if (split.dropped_users > 0) {
    std::cout << "notice: dropped " << split.dropped_users << " user(s) with < 3 events\n";
  }
  if (split.active_users.empty()) {
    std::cerr << "no users left after the leave-one-out split\n";
    return 1;
  }

  MojitoModel model(cfg, split.n_items, split.n_users);
  std::string epoch_log;
  TrainResult result = train(model, split, [&](const EpochLog& log) {
    char line[160];
    std::snprintf(line, sizeof(line), "%d\t%.6f\t%.6f\t%.6f", log.epoch, log.train_loss,
                  log.val_ndcg10, log.val_hr10);
    epoch_log += std::string(line) + "\n";
    std::cout << "epoch " << log.epoch << "  loss " << log.train_loss << "  val_ndcg10 "
              << log.val_ndcg10 << "  val_hr10 " << log.val_hr10 << "\n";
  });

  fs::create_directories(opts.out_dir);
  const std::string ckpt_path = opts.out_dir + "/checkpoint.ckpt";
  atomic_write_file(ckpt_path, result.best_checkpoint);
  atomic_write_file(opts.out_dir + "/epochs.tsv",
                    "epoch\ttrain_loss\tval_ndcg10\tval_hr10\n" + epoch_log);

  const std::string snapshot = checkpoint_config_text(result.best_checkpoint);
  nlohmann::ordered_json manifest;
  manifest["command"] = "train";
  manifest["data_dir"] = opts.data_dir;
  manifest["config"] = cfg.to_text();
  manifest["config_hash"] = cfg.hash();
  manifest["snapshot_hash"] = fnv1a_hex(snapshot);
  manifest["dataset_stats"] = stats_json(loaded.stats);
  manifest["seeds"] = {{"train", cfg.seed}};
  manifest["checkpoint_path"] = ckpt_path;
  manifest["report_paths"] = {opts.out_dir + "/epochs.tsv"};
  manifest["best_epoch"] = result.best_epoch;
  manifest["best_val_ndcg10"] = result.best_val_ndcg10;
  manifest["best_val_hr10"] = result.best_val_hr10;
  manifest["early_stopped"] = result.early_stopped;
  manifest["users_without_train_pairs"] = result.users_without_pairs;
  manifest["timings_ms"] = {{"total", ms_since(start)}};
  write_manifest(opts.out_dir + "/manifest.json", manifest);

  std::cout << "best epoch " << result.best_epoch << " (val NDCG@10 " << result.best_val_ndcg10
            << "); checkpoint written to " << ckpt_path << "\n";
  return 0;
}

struct EvaluateOpts {
  std::string checkpoint;
  std::string data_dir;
  std::string split = "test";
  std::uint64_t seed = 42;
  std::string out;
};

int run_evaluate(const EvaluateOpts& opts) {
  const auto start = Clock::now();
  const std::string bytes = read_file(opts.checkpoint);
  const std::string snapshot = checkpoint_config_text(bytes);
  MojitoModel model = MojitoModel::from_snapshot_text(snapshot);
  load_checkpoint_bytes(bytes, model.params());

  LoadedDataset loaded = load_dataset_dir(opts.data_dir);
  if (model.config().schema != loaded.dataset.schema.to_string()) {
    MojitoConfig dataset_view = model.config();
    dataset_view.schema = loaded.dataset.schema.to_string();
    std::cerr << "checkpoint/dataset mismatch: checkpoint schema '" << model.config().schema
              << "' (config hash " << model.config().hash() << ") vs dataset schema '"
              << loaded.dataset.schema.to_string() << "' (config hash " << dataset_view.hash()
              << ")\n";
    return 1;
  }
  SplitDataset split = leave_one_out_split(loaded.dataset);
  if (split.n_items != model.n_items() || split.n_users != model.n_users()) {
    std::cerr << "checkpoint/dataset mismatch: checkpoint tables sized for "
              << model.n_items() << " items / " << model.n_users() << " users, dataset has "
              << split.n_items << " / " << split.n_users << "\n";
    return 1;
  }

  const EvalSplit which = opts.split == "val" ? EvalSplit::kVal : EvalSplit::kTest;
  EvalReport report = evaluate(model, split, which, opts.seed);
  const std::string json = report.to_json();
  if (opts.out.empty() || opts.out == "-") {
    std::cout << json;
  } else {
    atomic_write_file(opts.out, json);
    nlohmann::ordered_json manifest;
    manifest["command"] = "evaluate";
    manifest["checkpoint"] = opts.checkpoint;
    manifest["data_dir"] = opts.data_dir;
    manifest["split"] = opts.split;
    manifest["config_hash"] = model.config().hash();
    manifest["seeds"] = {{"eval", opts.seed}};
    manifest["report_paths"] = {opts.out};
    manifest["timings_ms"] = {{"total", ms_since(start)}};
    write_manifest(opts.out + ".manifest.json", manifest);
  }
  return 0;
}

struct DiagnoseOpts {
  std::string checkpoint;
  std::string data_dir;
  int n_probes = 32;
  std::uint64_t seed = 42;
  std::string out;
};

int run_diagnose(const DiagnoseOpts& opts) {
  const std::string bytes = read_file(opts.checkpoint);
  MojitoModel model = MojitoModel::from_snapshot_text(checkpoint_config_text(bytes));
  load_checkpoint_bytes(bytes, model.params());
  if (model.config().heads < 2) {
    std::cerr << "diagnose-heads needs a model with H >= 2\n";
    return 1;
  }

  LoadedDataset loaded = load_dataset_dir(opts.data_dir);
  SplitDataset split = leave_one_out_split(loaded.dataset);
  if (split.active_users.empty()) {
    std::cerr << "no evaluable users in the dataset\n";
    return 1;
  }

  // random probe users from the test split
  Rng rng = Rng::derive(opts.seed, 0xd1a9);
  std::vector<UserId> users = split.active_users;
  rng.shuffle(users);
  users.resize(std::min<std::size_t>(users.size(), static_cast<std::size_t>(opts.n_probes)));
  std::vector<PaddedSequence> probes;
  probes.reserve(users.size());
  for (UserId u : users) {
    probes.push_back(eval_prefix(split, u, EvalSplit::kTest, model.config().seq_len));
  }
  const auto [mean, std_dev] = head_redundancy(model, probes);

  std::string out = "head_redundancy: " + format_mean_std(mean, std_dev) + "\n";
  out += "probes: " + std::to_string(probes.size()) + "\n";
  for (std::size_t b = 0; b < model.encoder.blocks.size(); ++b) {
    const MixtureAttentionBlock& blk = model.encoder.blocks[b];
    for (int h = 0; h < blk.heads(); ++h) {
      const auto [p_it, p_c] = blk.mixture_weights(h);
      char line[128];
      std::snprintf(line, sizeof(line), "block%zu.head%d: p_it=%.6f p_c=%.6f\n", b, h, p_it,
                    p_c);
      out += line;
    }
    char line[128];
    std::snprintf(line, sizeof(line), "block%zu: sigma_it=%.6f sigma_c=%.6f\n", b,
                  blk.sigma(MixComponent::kItem), blk.sigma(MixComponent::kContext));
    out += line;
  }
  if (opts.out.empty() || opts.out == "-") {
    std::cout << out;
  } else {
    atomic_write_file(opts.out, out);
    nlohmann::ordered_json manifest;
    manifest["command"] = "diagnose-heads";
    manifest["checkpoint"] = opts.checkpoint;
    manifest["data_dir"] = opts.data_dir;
    manifest["n_probes"] = opts.n_probes;
    manifest["seeds"] = {{"probe", opts.seed}};
    manifest["report_paths"] = {opts.out};
    write_manifest(opts.out + ".manifest.json", manifest);
  }
  return 0;
}

struct SynthOpts {
  std::string spec_path;
  std::string out_path;
};

int run_synth(const SynthOpts& opts) {
  const auto start = Clock::now();
  const std::string spec_text = read_file(opts.spec_path);
  SyntheticSpec spec = SyntheticSpec::parse(spec_text);
  const std::vector<RawEvent> events = generate_events(spec);
  atomic_write_file(opts.out_path, events_to_tsv(events));
  std::cout << "wrote " << events.size() << " events to " << opts.out_path << "\n";
  nlohmann::ordered_json manifest;
  manifest["command"] = "synth";
  manifest["spec"] = spec_text;
  manifest["seeds"] = {{"generate", spec.seed}};
  manifest["events"] = events.size();
  manifest["report_paths"] = {opts.out_path};
  if (spec.kind == SyntheticSpec::Kind::kContext) {
    const double ceiling = bayes_ceiling_hr10(spec);
    std::cout << "bayes context-scorer HR@10 ceiling: " << ceiling << "\n";
    manifest["bayes_hr10_ceiling"] = ceiling;
  }
  manifest["timings_ms"] = {{"total", ms_since(start)}};
  write_manifest(opts.out_path + ".manifest.json", manifest);
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"MOJITO: time-aware sequential recommendation"};
  app.require_subcommand(1);

  PreprocessOpts pre;
  CLI::App* cmd_pre = app.add_subcommand("preprocess", "index events and apply k-core filtering");
  cmd_pre->add_option("--input", pre.input, "event file")->required();
  cmd_pre->add_option("--out", pre.out_dir, "output dataset directory")->required();
  cmd_pre->add_option("--k-user", pre.k_user, "min events per user");
  cmd_pre->add_option("--k-item", pre.k_item, "min events per item");
  cmd_pre->add_option("--schema", pre.schema, "context schema (comma separated)");
  cmd_pre->add_option("--delimiter", pre.delimiter, "column delimiter (\\t, ',', '::', ...)");
  cmd_pre->add_option("--user-col", pre.user_col, "user column index");
  cmd_pre->add_option("--item-col", pre.item_col, "item column index");
  cmd_pre->add_option("--time-col", pre.time_col, "timestamp column index");
  cmd_pre->add_flag("--force", pre.force, "overwrite an existing output directory");

  TrainOpts tr;
  CLI::App* cmd_tr = app.add_subcommand("train", "train a model on a preprocessed dataset");
  cmd_tr->add_option("--data", tr.data_dir, "dataset directory")->required();
  cmd_tr->add_option("--config", tr.config_path, "key=value config file");
  cmd_tr->add_option("--out", tr.out_dir, "output directory")->required();
  cmd_tr->add_flag("--no-context", tr.no_context,
                   "ablation: zero context embeddings, p_it fixed at 1");

  EvaluateOpts ev;
  CLI::App* cmd_ev = app.add_subcommand("evaluate", "leave-one-out ranking evaluation");
  cmd_ev->add_option("--checkpoint", ev.checkpoint, "checkpoint file")->required();
  cmd_ev->add_option("--data", ev.data_dir, "dataset directory")->required();
  cmd_ev->add_option("--split", ev.split, "val or test")
      ->check(CLI::IsMember({"val", "test"}));
  cmd_ev->add_option("--seed", ev.seed, "evaluation seed");
  cmd_ev->add_option("--out", ev.out, "report path ('-' for stdout)");

  DiagnoseOpts di;
  CLI::App* cmd_di = app.add_subcommand("diagnose-heads", "attention-head redundancy report");
  cmd_di->add_option("--checkpoint", di.checkpoint, "checkpoint file")->required();
  cmd_di->add_option("--data", di.data_dir, "dataset directory")->required();
  cmd_di->add_option("--n-probes", di.n_probes, "number of probe users");
  cmd_di->add_option("--seed", di.seed, "probe selection seed");
  cmd_di->add_option("--out", di.out, "diagnostics path ('-' for stdout)");

  SynthOpts sy;
  CLI::App* cmd_sy = app.add_subcommand("synth", "generate synthetic events");
  cmd_sy->add_option("--spec", sy.spec_path, "synthetic spec file")->required();
  cmd_sy->add_option("--out", sy.out_path, "output TSV path")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (cmd_pre->parsed()) return run_preprocess(pre);
    if (cmd_tr->parsed()) return run_train(tr);
    if (cmd_ev->parsed()) return run_evaluate(ev);
    if (cmd_di->parsed()) return run_diagnose(di);
    if (cmd_sy->parsed()) return run_synth(sy);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace mojito::cli
