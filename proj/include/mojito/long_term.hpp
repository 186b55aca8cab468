#pragma once

// Attentive-FISM long-term preference: the user vector is translated by an
// attention-weighted aggregation of sampled history items, weighted by their
// similarity to the target item. Context-free by construction.

#include <vector>

#include "mojito/ops.hpp"
#include "mojito/tensor.hpp"

namespace mojito {

// m_u + sum_{f in F \ {v}} softmax_f(m_f^T m_v) m_f, shape 1 x d.
// When F \ {v} is empty the representation falls back to m_u alone and
// *fallback (if given) is set. Duplicates in F contribute separate terms.
Tensor fism_user_repr(const Tensor& user_table, const Tensor& item_table, std::int64_t user,
                      const std::vector<std::int64_t>& fism_items, std::int64_t target,
                      bool* fallback = nullptr);

// r_long = m_v^T m~_u(v), a 1x1 tensor.
Tensor long_term_score(const Tensor& user_table, const Tensor& item_table, std::int64_t user,
                       const std::vector<std::int64_t>& fism_items, std::int64_t target,
                       bool* fallback = nullptr);

}  // namespace mojito
