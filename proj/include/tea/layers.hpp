#pragma once

#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "tea/autodiff.hpp"
#include "tea/entities.hpp"

namespace tea {

/// Parameter indices of one pre-norm multi-head attention sublayer.
struct AttentionBlockIds {
  int norm = -1, q = -1, k = -1, v = -1, o = -1;
};

/// Parameter indices of one pre-norm feed-forward sublayer.
struct FeedForwardIds {
  int norm = -1, w1 = -1, w2 = -1;
};

/// Appends parameters to a set with the initializers used across the model.
template <typename Scalar>
class ParamFactory {
 public:
  ParamFactory(ad::ParameterSet<Scalar>& set, std::mt19937_64& rng) : set_(set), rng_(rng) {}

  int normal(const std::string& name, Eigen::Index rows, Eigen::Index cols, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    Matrix<Scalar> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(dist(rng_));
    return set_.add(name, std::move(m));
  }
  int linear(const std::string& name, Eigen::Index in, Eigen::Index out) {
    return normal(name, in, out, 1.0 / std::sqrt(static_cast<double>(in)));
  }
  int ones(const std::string& name, Eigen::Index cols) { return set_.add(name, Matrix<Scalar>::Ones(1, cols)); }
  int zeros(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    return set_.add(name, Matrix<Scalar>::Zero(rows, cols));
  }

  AttentionBlockIds attention(const std::string& prefix, int d) {
    AttentionBlockIds ids;
    ids.norm = ones(prefix + ".norm", d);
    ids.q = linear(prefix + ".q", d, d);
    ids.k = linear(prefix + ".k", d, d);
    ids.v = linear(prefix + ".v", d, d);
    ids.o = linear(prefix + ".o", d, d);
    return ids;
  }
  FeedForwardIds feed_forward(const std::string& prefix, int d, int hidden) {
    FeedForwardIds ids;
    ids.norm = ones(prefix + ".norm", d);
    ids.w1 = linear(prefix + ".w1", d, hidden);
    ids.w2 = linear(prefix + ".w2", hidden, d);
    return ids;
  }

 private:
  ad::ParameterSet<Scalar>& set_;
  std::mt19937_64& rng_;
};

/// Multi-head attention without the residual: queries from `x`, keys and
/// values from `memory` (pass x again for self-attention).
template <typename Scalar>
ad::Var multi_head(ad::Tape<Scalar>& t, ad::Var x, ad::Var memory, const AttentionBlockIds& ids, int heads,
                   ad::Var bias, std::shared_ptr<const Mask> mask, ad::AttentionRecord<Scalar>* record = nullptr) {
  using namespace ad;
  Var q = matmul(t, x, t.param(ids.q));
  Var k = matmul(t, memory, t.param(ids.k));
  Var v = matmul(t, memory, t.param(ids.v));
  Var a = attention(t, q, k, v, heads, bias, std::move(mask), record);
  return matmul(t, a, t.param(ids.o));
}

/// x + SelfAttn(norm(x)).
template <typename Scalar>
ad::Var self_attention_block(ad::Tape<Scalar>& t, ad::Var x, const AttentionBlockIds& ids, int heads, ad::Var bias,
                             std::shared_ptr<const Mask> mask, ad::AttentionRecord<Scalar>* record = nullptr) {
  ad::Var h = ad::rms_norm(t, x, t.param(ids.norm));
  return ad::add(t, x, multi_head(t, h, h, ids, heads, bias, std::move(mask), record));
}

/// x + CrossAttn(norm(x), memory). The memory is used as given.
template <typename Scalar>
ad::Var cross_attention_block(ad::Tape<Scalar>& t, ad::Var x, ad::Var memory, const AttentionBlockIds& ids,
                              int heads, std::shared_ptr<const Mask> mask,
                              ad::AttentionRecord<Scalar>* record = nullptr) {
  ad::Var h = ad::rms_norm(t, x, t.param(ids.norm));
  return ad::add(t, x, multi_head(t, h, memory, ids, heads, ad::Var{}, std::move(mask), record));
}

/// x + W2 gelu(W1 norm(x)).
template <typename Scalar>
ad::Var feed_forward_block(ad::Tape<Scalar>& t, ad::Var x, const FeedForwardIds& ids) {
  using namespace ad;
  Var h = rms_norm(t, x, t.param(ids.norm));
  Var u = gelu(t, matmul(t, h, t.param(ids.w1)));
  return add(t, x, matmul(t, u, t.param(ids.w2)));
}

/// Bucketed relative position (T5 scheme); relative = key_pos - query_pos.
inline int relative_position_bucket(int relative, bool bidirectional, int num_buckets, int max_distance) {
  int bucket = 0;
  int n = -relative;
  if (bidirectional) {
    num_buckets /= 2;
    if (n < 0) bucket += num_buckets;
    n = std::abs(n);
  } else {
    n = std::max(n, 0);
  }
  const int max_exact = num_buckets / 2;
  if (n < max_exact) return bucket + n;
  const int large = max_exact + static_cast<int>(std::log(static_cast<double>(n) / max_exact) /
                                                 std::log(static_cast<double>(max_distance) / max_exact) *
                                                 (num_buckets - max_exact));
  return bucket + std::min(large, num_buckets - 1);
}

/// Bucket ids of an n x n block of positions.
struct RelativeBuckets {
  int length = 0;
  std::vector<int> ids;  ///< row-major n x n
};

inline RelativeBuckets relative_buckets(int length, bool bidirectional, int num_buckets, int max_distance) {
  RelativeBuckets b;
  b.length = length;
  b.ids.resize(static_cast<std::size_t>(length) * length);
  for (int i = 0; i < length; ++i) {
    for (int j = 0; j < length; ++j) {
      b.ids[static_cast<std::size_t>(i) * length + j] =
          relative_position_bucket(j - i, bidirectional, num_buckets, max_distance);
    }
  }
  return b;
}

/// Tape op: (heads*total) x total head-major bias holding table[bucket(i,j)]
/// on the block of positions [offset, offset+n) and zero elsewhere.
template <typename Scalar>
ad::Var relative_bias_op(ad::Tape<Scalar>& t, ad::Var table, std::shared_ptr<const RelativeBuckets> buckets,
                         Eigen::Index offset, Eigen::Index total) {
  const auto& tab = t.value(table);
  const Eigen::Index heads = tab.cols();
  const int n = buckets->length;
  Matrix<Scalar> out = Matrix<Scalar>::Zero(heads * total, total);
  for (Eigen::Index h = 0; h < heads; ++h) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        out(h * total + offset + i, offset + j) = tab(buckets->ids[static_cast<std::size_t>(i) * n + j], h);
      }
    }
  }
  return t.record(std::move(out), {table}, [table, buckets, offset, total](ad::Tape<Scalar>& tp, const Matrix<Scalar>& g) {
    const auto& tab = tp.value(table);
    Matrix<Scalar> d = Matrix<Scalar>::Zero(tab.rows(), tab.cols());
    const int n = buckets->length;
    for (Eigen::Index h = 0; h < tab.cols(); ++h) {
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          d(buckets->ids[static_cast<std::size_t>(i) * n + j], h) += g(h * total + offset + i, offset + j);
        }
      }
    }
    tp.add_grad(table, d);
  });
}

/// Encoder self-attention mask over [entities; question]. Entity pairs are
/// allowed within one frame (or globally when frame_local is false) when both
/// are real; question rows and columns are open to every real entity; a
/// padding slot only sees itself.
inline Mask frame_local_mask(const EntitySequence& seq, int question_len, bool frame_local = true) {
  const int L = seq.size();
  const int total = L + question_len;
  Mask m = Mask::Constant(total, total, false);
  for (int i = 0; i < total; ++i) {
    const bool qi = i >= L;
    const bool pad_i = !qi && seq.slots[i].is_padding();
    for (int j = 0; j < total; ++j) {
      const bool qj = j >= L;
      const bool pad_j = !qj && seq.slots[j].is_padding();
      bool allowed;
      if (pad_i || pad_j) {
        allowed = i == j;
      } else if (qi || qj) {
        allowed = true;
      } else {
        allowed = !frame_local || seq.slots[i].frame_index == seq.slots[j].frame_index;
      }
      m(i, j) = allowed;
    }
  }
  return m;
}

/// Causal mask for decoder self-attention.
inline Mask causal_mask(int n) {
  Mask m(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) m(i, j) = j <= i;
  }
  return m;
}

}  // namespace tea
