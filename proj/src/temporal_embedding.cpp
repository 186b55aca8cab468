#include "mojito/temporal_embedding.hpp"

#include <cmath>

namespace mojito {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Constant basis matrix B_c of shape (K+1) x (2K+1) with
// amplitudes * B_c = [a_0, a_1 cos(w_1 c), a_1 sin(w_1 c), ...], w_k = 2 pi k / P.
Tensor basis_for_value(int period, int n_freq, int value) {
  const std::size_t rows = static_cast<std::size_t>(n_freq) + 1;
  const std::size_t cols = 2 * static_cast<std::size_t>(n_freq) + 1;
  Tensor basis = Tensor::zeros({rows, cols});
  basis.at(0, 0) = 1.0;
  for (int k = 1; k <= n_freq; ++k) {
    const double angle = kTwoPi * k * value / period;
    basis.at(static_cast<std::size_t>(k), 2 * static_cast<std::size_t>(k) - 1) = std::cos(angle);
    basis.at(static_cast<std::size_t>(k), 2 * static_cast<std::size_t>(k)) = std::sin(angle);
  }
  return basis;
}

}  // namespace

TemporalEmbedding::TemporalEmbedding(const ContextSchema& schema, int d, Rng& init_rng)
    : d_(d), schema_(schema) {
  if (d < 1) throw DomainError("TemporalEmbedding: d must be >= 1");
  for (const ContextType& t : schema.types()) {
    MercerKernel k;
    k.period = t.cardinality;
    // 2*K+1 features must fit in d; beyond that, frequencies are capped at 8
    // and at the Nyquist limit of the period.
    k.n_freq = std::min({8, (t.cardinality - 1) / 2, (d - 1) / 2});
    std::vector<double> amps(static_cast<std::size_t>(k.n_freq) + 1, 1.0);
    for (int f = 1; f <= k.n_freq; ++f) amps[static_cast<std::size_t>(f)] = 1.0 / f;
    const std::size_t n_amps = amps.size();
    k.amplitudes = Tensor::from_values({1, n_amps}, std::move(amps), true);
    k.projection = Tensor::glorot(static_cast<std::size_t>(d), static_cast<std::size_t>(d),
                                  init_rng, true);
    kernels.push_back(std::move(k));
  }
  const auto du = static_cast<std::size_t>(d);
  fusion_weight = Tensor::glorot(schema.size() * du, du, init_rng, true);
  fusion_bias = Tensor::zeros({1, du}, true);
}

void TemporalEmbedding::register_params(ParameterStore& store, const std::string& prefix) {
  for (std::size_t j = 0; j < kernels.size(); ++j) {
    store.add(prefix + ".kernel" + std::to_string(j) + ".amplitudes", kernels[j].amplitudes);
    store.add(prefix + ".kernel" + std::to_string(j) + ".projection", kernels[j].projection);
  }
  store.add(prefix + ".fusion_weight", fusion_weight);
  store.add(prefix + ".fusion_bias", fusion_bias);
}

Tensor TemporalEmbedding::mercer_embed(std::size_t type, int value) const {
  if (type >= kernels.size()) throw IndexError("mercer_embed: unknown context type");
  const MercerKernel& k = kernels[type];
  if (value < 0 || value >= k.period) {
    throw IndexError("mercer_embed: value " + std::to_string(value) + " out of range [0, " +
                     std::to_string(k.period) + ")");
  }
  Tensor feat = matmul(k.amplitudes, basis_for_value(k.period, k.n_freq, value));
  const std::size_t width = feat.cols();
  const auto du = static_cast<std::size_t>(d_);
  if (width < du) {
    feat = concat_last_dim({feat, Tensor::zeros({1, du - width})});
  }
  return matmul(feat, k.projection);
}

Tensor TemporalEmbedding::mercer_table(std::size_t type) const {
  if (type >= kernels.size()) throw IndexError("mercer_table: unknown context type");
  const MercerKernel& k = kernels[type];
  const auto du = static_cast<std::size_t>(d_);
  std::vector<Tensor> rows;
  rows.reserve(static_cast<std::size_t>(k.period));
  for (int c = 0; c < k.period; ++c) {
    Tensor feat = matmul(k.amplitudes, basis_for_value(k.period, k.n_freq, c));
    if (feat.cols() < du) {
      feat = concat_last_dim({feat, Tensor::zeros({1, du - feat.cols()})});
    }
    rows.push_back(feat);
  }
  return matmul(stack_rows(rows), k.projection);
}

std::vector<Tensor> TemporalEmbedding::mercer_tables() const {
  std::vector<Tensor> tables;
  tables.reserve(kernels.size());
  for (std::size_t j = 0; j < kernels.size(); ++j) tables.push_back(mercer_table(j));
  return tables;
}

Tensor TemporalEmbedding::fuse_context(const ContextTuple& tuple) const {
  if (tuple.size() != schema_.size()) {
    throw ContractError("fuse_context: tuple has " + std::to_string(tuple.size()) +
                        " values but the schema has " + std::to_string(schema_.size()));
  }
  if (ablated) return Tensor::zeros({1, static_cast<std::size_t>(d_)});
  std::vector<Tensor> parts;
  parts.reserve(tuple.size());
  for (std::size_t j = 0; j < tuple.size(); ++j) parts.push_back(mercer_embed(j, tuple[j]));
  return add(matmul(concat_last_dim(parts), fusion_weight), fusion_bias);
}

Tensor TemporalEmbedding::fuse_rows(const std::vector<Tensor>& tables,
                                    const std::vector<ContextTuple>& tuples) const {
  if (tuples.empty()) throw ContractError("fuse_rows: no tuples");
  if (ablated) return Tensor::zeros({tuples.size(), static_cast<std::size_t>(d_)});
  if (tables.size() != kernels.size()) {
    throw ContractError("fuse_rows: expected one table per context type");
  }
  std::vector<Tensor> per_type;
  per_type.reserve(kernels.size());
  for (std::size_t j = 0; j < kernels.size(); ++j) {
    std::vector<std::int64_t> ids;
    ids.reserve(tuples.size());
    for (const ContextTuple& t : tuples) {
      if (t.size() != schema_.size()) {
        throw ContractError("fuse_rows: tuple length does not match the schema");
      }
      ids.push_back(t[j]);
    }
    per_type.push_back(gather_rows(tables[j], ids));
  }
  return add_rows(matmul(concat_last_dim(per_type), fusion_weight), fusion_bias);
}

std::vector<double> TemporalEmbedding::raw_features(std::size_t type, int value) const {
  if (type >= kernels.size()) throw IndexError("raw_features: unknown context type");
  const MercerKernel& k = kernels[type];
  if (value < 0 || value >= k.period) throw IndexError("raw_features: value out of range");
  NoGradGuard guard;
  return matmul(k.amplitudes, basis_for_value(k.period, k.n_freq, value)).values();
}

}  // namespace mojito
