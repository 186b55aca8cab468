#include "mojito/long_term.hpp"

namespace mojito {

Tensor fism_user_repr(const Tensor& user_table, const Tensor& item_table, std::int64_t user,
                      const std::vector<std::int64_t>& fism_items, std::int64_t target,
                      bool* fallback) {
  Tensor m_u = embedding_lookup(user_table, {user});
  std::vector<std::int64_t> kept;
  kept.reserve(fism_items.size());
  for (std::int64_t f : fism_items) {
    if (f != target) kept.push_back(f);
  }
  if (fallback) *fallback = kept.empty();
  if (kept.empty()) return m_u;

  Tensor m_f = embedding_lookup(item_table, kept);           // |F'| x d
  Tensor m_v = embedding_lookup(item_table, {target});       // 1 x d
  Tensor dots = transpose(matmul(m_f, transpose(m_v)));      // 1 x |F'|
  Tensor weights = softmax_rows(dots);
  return add(m_u, matmul(weights, m_f));
}

Tensor long_term_score(const Tensor& user_table, const Tensor& item_table, std::int64_t user,
                       const std::vector<std::int64_t>& fism_items, std::int64_t target,
                       bool* fallback) {
  Tensor repr = fism_user_repr(user_table, item_table, user, fism_items, target, fallback);
  Tensor m_v = embedding_lookup(item_table, {target});
  return row_sums(hadamard(m_v, repr));
}

}  // namespace mojito
