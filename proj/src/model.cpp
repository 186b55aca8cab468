#include "mojito/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>

#include "mojito/util.hpp"

namespace mojito {

namespace {

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw ContractError("cannot format double");
  return std::string(buf, ptr);
}

bool parse_double(const std::string& s, double& out) {
  try {
    std::size_t used = 0;
    out = std::stod(s, &used);
    return used == s.size();
  } catch (...) {
    return false;
  }
}

bool parse_int(const std::string& s, long long& out) {
  const char* b = s.data();
  const char* e = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && ptr == e;
}

}  // namespace

MojitoConfig MojitoConfig::parse(const std::string& text, std::vector<std::string>& errors,
                                 std::vector<std::string>& notices) {
  MojitoConfig cfg;
  bool saw_lambda = false;
  for (const std::string& raw : split_string(text, '\n')) {
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back("malformed line '" + line + "' (expected key=value)");
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    long long iv = 0;
    double dv = 0.0;
    auto want_int = [&](int& field, long long lo) {
      if (parse_int(value, iv) && iv >= lo && iv <= 1'000'000'000LL) {
        field = static_cast<int>(iv);
      } else {
        errors.push_back(key + " must be an integer >= " + std::to_string(lo) + ", got '" +
                         value + "'");
      }
    };
    if (key == "d") {
      want_int(cfg.d, 1);
    } else if (key == "L") {
      want_int(cfg.seq_len, 2);
    } else if (key == "B") {
      want_int(cfg.blocks, 1);
    } else if (key == "H") {
      want_int(cfg.heads, 1);
    } else if (key == "N") {
      want_int(cfg.fism_n, 1);
    } else if (key == "batch") {
      want_int(cfg.batch, 1);
    } else if (key == "epochs") {
      want_int(cfg.epochs, 1);
    } else if (key == "patience") {
      want_int(cfg.patience, 0);
    } else if (key == "lambda") {
      saw_lambda = true;
      if (parse_double(value, dv) && dv >= 0.0 && dv <= 1.0) {
        cfg.lambda = dv;
      } else {
        errors.push_back("lambda must be in [0,1], got '" + value + "'");
      }
    } else if (key == "lr") {
      if (parse_double(value, dv) && dv > 0.0) {
        cfg.lr = dv;
      } else {
        errors.push_back("lr must be a positive number, got '" + value + "'");
      }
    } else if (key == "seed") {
      if (parse_int(value, iv) && iv >= 0) {
        cfg.seed = static_cast<std::uint64_t>(iv);
      } else {
        errors.push_back("seed must be a non-negative integer, got '" + value + "'");
      }
    } else if (key == "schema") {
      try {
        ContextSchema::parse(value);
        cfg.schema = value;
      } catch (const std::exception& e) {
        errors.push_back(std::string("schema: ") + e.what());
      }
    } else if (key == "attention_mode") {
      if (value == "literal") {
        cfg.attention_mode = AttentionMode::kLiteral;
      } else if (value == "compat") {
        cfg.attention_mode = AttentionMode::kCompat;
      } else {
        errors.push_back("attention_mode must be 'literal' or 'compat', got '" + value + "'");
      }
    } else if (key == "no_context") {
      if (value == "0" || value == "false") {
        cfg.no_context = false;
      } else if (value == "1" || value == "true") {
        cfg.no_context = true;
      } else {
        errors.push_back("no_context must be 0 or 1, got '" + value + "'");
      }
    } else {
      errors.push_back("unknown config key '" + key + "'");
    }
  }
  if (!saw_lambda) notices.push_back("lambda not set; defaulting to 0.5");
  return cfg;
}

std::string MojitoConfig::to_text() const {
  std::string out;
  out += "d=" + std::to_string(d) + "\n";
  out += "L=" + std::to_string(seq_len) + "\n";
  out += "B=" + std::to_string(blocks) + "\n";
  out += "H=" + std::to_string(heads) + "\n";
  out += "N=" + std::to_string(fism_n) + "\n";
  out += "lambda=" + format_double(lambda) + "\n";
  out += "lr=" + format_double(lr) + "\n";
  out += "batch=" + std::to_string(batch) + "\n";
  out += "epochs=" + std::to_string(epochs) + "\n";
  out += "patience=" + std::to_string(patience) + "\n";
  out += "seed=" + std::to_string(seed) + "\n";
  out += "schema=" + schema + "\n";
  out += std::string("attention_mode=") +
         (attention_mode == AttentionMode::kLiteral ? "literal" : "compat") + "\n";
  out += std::string("no_context=") + (no_context ? "1" : "0") + "\n";
  return out;
}

std::string MojitoConfig::hash() const { return fnv1a_hex(to_text()); }

void MojitoConfig::validate(std::vector<std::string>& errors) const {
  if (d < 1) errors.push_back("d must be >= 1");
  if (seq_len < 2) errors.push_back("L must be >= 2");
  if (blocks < 1) errors.push_back("B must be >= 1");
  if (heads < 1) errors.push_back("H must be >= 1");
  if (fism_n < 1) errors.push_back("N must be >= 1");
  if (lambda < 0.0 || lambda > 1.0) errors.push_back("lambda must be in [0,1]");
  if (lr <= 0.0) errors.push_back("lr must be positive");
  if (batch < 1) errors.push_back("batch must be >= 1");
  if (epochs < 1) errors.push_back("epochs must be >= 1");
  if (patience < 0) errors.push_back("patience must be >= 0");
  try {
    ContextSchema::parse(schema);
  } catch (const std::exception& e) {
    errors.push_back(std::string("schema: ") + e.what());
  }
}

MojitoModel::MojitoModel(const MojitoConfig& config, std::size_t n_items, std::size_t n_users)
    : config_(config), n_items_(n_items), n_users_(n_users) {
  std::vector<std::string> errors;
  config_.validate(errors);
  if (!errors.empty()) {
    std::string msg = "invalid config:";
    for (const std::string& e : errors) msg += " " + e + ";";
    throw ContractError(msg);
  }
  if (n_items_ < 1 || n_users_ < 1) {
    throw ContractError("model needs at least one item and one user");
  }
  Rng init(config_.seed);
  const auto d = static_cast<std::size_t>(config_.d);
  const auto L = static_cast<std::size_t>(config_.seq_len);

  item_table = Tensor::randn({n_items_ + 1, d}, init, 0.01, true);
  for (std::size_t c = 0; c < d; ++c) item_table.values()[c] = 0.0;  // frozen padding row
  user_table = Tensor::randn({n_users_ + 1, d}, init, 0.01, true);
  for (std::size_t c = 0; c < d; ++c) user_table.values()[c] = 0.0;
  position_table = Tensor::randn({L, 2 * d}, init, 0.01, true);

  temporal = TemporalEmbedding(ContextSchema::parse(config_.schema), config_.d, init);
  temporal.ablated = config_.no_context;
  encoder = EncoderStack(config_.d, config_.heads, config_.blocks, config_.attention_mode, init);

  params_.add("item_table", item_table);
  params_.add("user_table", user_table);
  params_.add("position_table", position_table);
  temporal.register_params(params_, "temporal");
  encoder.register_params(params_, "encoder");
}

std::string MojitoModel::snapshot_text() const {
  return config_.to_text() + "n_items=" + std::to_string(n_items_) +
         "\nn_users=" + std::to_string(n_users_) + "\n";
}

MojitoModel MojitoModel::from_snapshot_text(const std::string& text) {
  std::string config_part;
  std::size_t n_items = 0, n_users = 0;
  for (const std::string& line : split_string(text, '\n')) {
    const std::string t = trim(line);
    if (t.rfind("n_items=", 0) == 0) {
      n_items = static_cast<std::size_t>(std::stoull(t.substr(8)));
    } else if (t.rfind("n_users=", 0) == 0) {
      n_users = static_cast<std::size_t>(std::stoull(t.substr(8)));
    } else if (!t.empty()) {
      config_part += t + "\n";
    }
  }
  std::vector<std::string> errors, notices;
  MojitoConfig cfg = MojitoConfig::parse(config_part, errors, notices);
  if (!errors.empty()) {
    std::string msg = "bad checkpoint snapshot:";
    for (const std::string& e : errors) msg += " " + e + ";";
    throw ContractError(msg);
  }
  return MojitoModel(cfg, n_items, n_users);
}

Tensor MojitoModel::build_input(const std::vector<ItemId>& items,
                                const std::vector<ContextTuple>& ctxs,
                                const std::vector<Tensor>& context_tables) const {
  const auto L = static_cast<std::size_t>(config_.seq_len);
  if (items.size() != L || ctxs.size() != L) {
    throw ContractError("build_input: expected " + std::to_string(L) + " positions, got " +
                        std::to_string(items.size()) + " items / " + std::to_string(ctxs.size()) +
                        " contexts");
  }
  Tensor item_part = embedding_lookup(item_table, items);
  Tensor ctx_part = temporal.fuse_rows(context_tables, ctxs);
  return add(concat_last_dim({item_part, ctx_part}), position_table);
}

Tensor MojitoModel::encode_sequence(const PaddedSequence& prefix, Rng* rng, RunMode mode,
                                    std::vector<Tensor>* last_block_heads) const {
  const std::vector<Tensor> tables = temporal.ablated ? std::vector<Tensor>{}
                                                      : temporal.mercer_tables();
  Tensor x0 = build_input(prefix.items, prefix.ctxs, tables);
  return encode_input(x0, rng, mode, last_block_heads);
}

Tensor MojitoModel::short_term_score(const Tensor& encoder_row, ItemId v,
                                     const Tensor& fused_ctx) const {
  if (v == 0) throw ContractError("short_term_score: candidate is the padding item");
  Tensor target = concat_last_dim({embedding_lookup(item_table, {v}), fused_ctx});
  return row_sums(hadamard(encoder_row, target));
}

Tensor MojitoModel::short_term_score(const Tensor& encoder_row, ItemId v,
                                     const ContextTuple& c_next) const {
  return short_term_score(encoder_row, v, temporal.fuse_context(c_next));
}

Tensor MojitoModel::combined_score(UserId u, const PaddedSequence& prefix, ItemId v,
                                   const ContextTuple& c_next,
                                   const std::vector<ItemId>& fism_items) const {
  Tensor xb = encode_sequence(prefix, nullptr, RunMode::kInference);
  Tensor last = slice_rows(xb, static_cast<std::size_t>(config_.seq_len) - 1, 1);
  Tensor s_short = short_term_score(last, v, c_next);
  Tensor s_long = long_term(u, fism_items, v);
  return add(scale_const(s_short, config_.lambda), scale_const(s_long, 1.0 - config_.lambda));
}

std::vector<double> MojitoModel::candidate_scores(UserId u, const PaddedSequence& prefix,
                                                  const ContextTuple& c_next,
                                                  const std::vector<ItemId>& candidates,
                                                  const std::vector<ItemId>& fism_items) const {
  if (candidates.empty()) throw ContractError("candidate_scores: no candidates");
  NoGradGuard guard;
  Tensor xb = encode_sequence(prefix, nullptr, RunMode::kInference);
  Tensor last = slice_rows(xb, static_cast<std::size_t>(config_.seq_len) - 1, 1);
  Tensor fused = temporal.fuse_context(c_next);
  std::vector<double> out;
  out.reserve(candidates.size());
  for (ItemId v : candidates) {
    const double s = short_term_score(last, v, fused).scalar_value();
    const double l = long_term(u, fism_items, v).scalar_value();
    out.push_back(config_.lambda * s + (1.0 - config_.lambda) * l);
  }
  return out;
}

std::vector<ItemId> MojitoModel::predict_topk(UserId u, const PaddedSequence& prefix,
                                              const ContextTuple& c_next,
                                              const std::vector<ItemId>& candidates,
                                              std::size_t k,
                                              const std::vector<ItemId>& fism_items) const {
  if (candidates.empty()) throw ContractError("predict_topk: no candidates");
  const std::vector<double> scores = candidate_scores(u, prefix, c_next, candidates, fism_items);
  std::vector<std::size_t> order(candidates.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return candidates[a] < candidates[b];
  });
  std::vector<ItemId> out;
  const std::size_t take = std::min(k, candidates.size());
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(candidates[order[i]]);
  return out;
}

Tensor sequence_loss(const MojitoModel& model, const std::vector<TrainingExample>& batch,
                     LossSide side, Rng& rng) {
  if (batch.empty()) throw ContractError("sequence_loss: empty batch");
  const auto L = static_cast<std::size_t>(model.config().seq_len);
  Tensor loss = Tensor::scalar(0.0);

  const std::vector<Tensor> tables = (side == LossSide::kShort && !model.temporal.ablated)
                                         ? model.temporal.mercer_tables()
                                         : std::vector<Tensor>{};

  for (const TrainingExample& ex : batch) {
    if (ex.items.size() != L || ex.pos_items.size() != L || ex.neg_items.size() != L) {
      throw ContractError("sequence_loss: example is not padded to L");
    }
    if (side == LossSide::kShort) {
      Tensor x0 = model.build_input(ex.items, ex.ctxs, tables);
      Tensor xb = model.encode_input(x0, &rng, RunMode::kTrain);
      Tensor ctx_rows = model.temporal.fuse_rows(tables, ex.pos_ctxs);
      Tensor pos_emb = embedding_lookup(model.item_table, ex.pos_items);
      Tensor neg_emb = embedding_lookup(model.item_table, ex.neg_items);
      Tensor s_pos = row_sums(hadamard(xb, concat_last_dim({pos_emb, ctx_rows})));
      Tensor s_neg = row_sums(hadamard(xb, concat_last_dim({neg_emb, ctx_rows})));
      Tensor log_pos = log_clamped(sigmoid(s_pos));
      Tensor log_neg = log_clamped(add_const(scale_const(sigmoid(s_neg), -1.0), 1.0));
      Tensor per_pos = scale_const(add(log_pos, log_neg), -1.0);
      Tensor mask = Tensor::zeros({L, 1});
      for (std::size_t l = 0; l < L; ++l) mask.values()[l] = ex.pos_items[l] != 0 ? 1.0 : 0.0;
      loss = add(loss, sum(hadamard(per_pos, mask)));
    } else {
      for (std::size_t l = 0; l < L; ++l) {
        if (ex.pos_items[l] == 0) continue;
        Tensor r_pos = model.long_term(ex.user, ex.fism_items, ex.pos_items[l]);
        Tensor r_neg = model.long_term(ex.user, ex.fism_items, ex.neg_items[l]);
        Tensor log_pos = log_clamped(sigmoid(r_pos));
        Tensor log_neg = log_clamped(add_const(scale_const(sigmoid(r_neg), -1.0), 1.0));
        loss = add(loss, scale_const(add(log_pos, log_neg), -1.0));
      }
    }
  }
  return loss;
}

int rank_of_target(const std::vector<double>& scores, const std::vector<ItemId>& ids,
                   ItemId target) {
  if (scores.size() != ids.size()) throw ContractError("rank_of_target: size mismatch");
  std::size_t target_idx = ids.size();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == target) {
      target_idx = i;
      break;
    }
  }
  if (target_idx == ids.size()) throw ContractError("rank_of_target: target not a candidate");
  const double ts = scores[target_idx];
  int better = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i == target_idx) continue;
    if (scores[i] > ts || (scores[i] == ts && ids[i] < target)) ++better;
  }
  return better + 1;
}

}  // namespace mojito
