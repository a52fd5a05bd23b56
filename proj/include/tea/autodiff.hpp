#pragma once

// Reverse-mode differentiation over dense row-major matrices. A Tape records
// every forward op together with a closure that propagates the output gradient
// to its parents; Tape::backward replays those closures in reverse order.

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "tea/tensor.hpp"

namespace tea::ad {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Named, ordered collection of trainable matrices. Order is the checkpoint order.
template <typename Scalar>
class ParameterSet {
 public:
  using Mat = Matrix<Scalar>;

  int add(std::string name, Mat init) {
    names_.push_back(std::move(name));
    values_.push_back(std::move(init));
    return static_cast<int>(values_.size()) - 1;
  }

  int size() const { return static_cast<int>(values_.size()); }
  Mat& value(int i) { return values_[i]; }
  const Mat& value(int i) const { return values_[i]; }
  const std::string& name(int i) const { return names_[i]; }

  int index_of(const std::string& name) const {
    for (int i = 0; i < size(); ++i) {
      if (names_[i] == name) return i;
    }
    throw std::out_of_range("no parameter named '" + name + "'");
  }

  std::vector<Mat> zeros_like() const {
    std::vector<Mat> out;
    out.reserve(values_.size());
    for (const auto& v : values_) out.push_back(Mat::Zero(v.rows(), v.cols()));
    return out;
  }

  Eigen::Index total_size() const {
    Eigen::Index n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Mat> values_;
};

template <typename Scalar>
using Gradients = std::vector<Matrix<Scalar>>;

template <typename Scalar>
class Tape {
 public:
  using Mat = Matrix<Scalar>;
  using Backward = std::function<void(Tape&, const Mat&)>;

  explicit Tape(const ParameterSet<Scalar>* params = nullptr) : params_(params) {
    if (params_ != nullptr) param_nodes_.assign(params_->size(), -1);
  }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient.
  Var constant(Mat value) { return push(std::move(value), false); }

  /// Leaf that collects a gradient (used for checks against inputs).
  Var input(Mat value) { return push(std::move(value), true); }

  /// Leaf bound to parameter `index`; repeated calls return the same node.
  Var param(int index) {
    if (params_ == nullptr) throw std::logic_error("tape has no parameter set");
    int& node = param_nodes_.at(index);
    if (node < 0) {
      Node n;
      n.external = &params_->value(index);
      n.requires_grad = track_params_;
      nodes_.push_back(std::move(n));
      node = static_cast<int>(nodes_.size()) - 1;
    }
    return Var{node};
  }

  /// Records an op output. `backward` runs only if some parent needs a gradient.
  Var record(Mat value, std::initializer_list<Var> parents, Backward backward) {
    bool needs = false;
    for (Var p : parents) needs = needs || nodes_[p.id].requires_grad;
    Var out = push(std::move(value), needs);
    if (needs) nodes_[out.id].backward = std::move(backward);
    return out;
  }

  Var record(Mat value, const std::vector<Var>& parents, Backward backward) {
    bool needs = false;
    for (Var p : parents) needs = needs || nodes_[p.id].requires_grad;
    Var out = push(std::move(value), needs);
    if (needs) nodes_[out.id].backward = std::move(backward);
    return out;
  }

  const Mat& value(Var v) const {
    const auto& n = nodes_[v.id];
    return n.external != nullptr ? *n.external : n.own;
  }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  /// Gradient of the last backward pass; empty when nothing flowed into `v`.
  const Mat& grad(Var v) const { return nodes_[v.id].grad; }

  template <typename Derived>
  void add_grad(Var v, const Eigen::MatrixBase<Derived>& g) {
    auto& n = nodes_[v.id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Reverse sweep from a 1x1 root.
  void backward(Var root) {
    if (value(root).size() != 1) throw std::logic_error("backward root must be a scalar");
    for (auto& n : nodes_) n.grad.resize(0, 0);
    nodes_[root.id].grad = Mat::Ones(1, 1);
    for (int i = root.id; i >= 0; --i) {
      auto& n = nodes_[i];
      if (!n.backward || n.grad.size() == 0) continue;
      n.backward(*this, n.grad);
    }
  }

  /// Adds the parameter gradients of the last backward pass into `into`.
  void accumulate_param_grads(Gradients<Scalar>& into) const {
    for (std::size_t i = 0; i < param_nodes_.size(); ++i) {
      const int node = param_nodes_[i];
      if (node < 0) continue;
      const auto& g = nodes_[node].grad;
      if (g.size() != 0) into[i] += g;
    }
  }

  /// Freezes parameters (no gradient through them) for inference-only passes.
  void set_track_params(bool on) { track_params_ = on; }

  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    const Mat* external = nullptr;
    Mat own;
    Mat grad;
    bool requires_grad = false;
    Backward backward;
  };

  Var push(Mat value, bool needs_grad) {
    Node n;
    n.own = std::move(value);
    n.requires_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  const ParameterSet<Scalar>* params_ = nullptr;
  std::vector<int> param_nodes_;
  std::vector<Node> nodes_;
  bool track_params_ = true;
};

// ---------------------------------------------------------------------------
// Elementary ops

template <typename Scalar>
Var matmul(Tape<Scalar>& t, Var a, Var b) {
  return t.record(t.value(a) * t.value(b), {a, b}, [a, b](Tape<Scalar>& tp, const Matrix<Scalar>& g) {
    if (tp.requires_grad(a)) tp.add_grad(a, g * tp.value(b).transpose());
    if (tp.requires_grad(b)) tp.add_grad(b, tp.value(a).transpose() * g);
  });
}

/// a * b^T
template <typename Scalar>
Var matmul_nt(Tape<Scalar>& t, Var a, Var b) {
  return t.record(t.value(a) * t.value(b).transpose(), {a, b},
                  [a, b](Tape<Scalar>& tp, const Matrix<Scalar>& g) {
                    if (tp.requires_grad(a)) tp.add_grad(a, g * tp.value(b));
                    if (tp.requires_grad(b)) tp.add_grad(b, g.transpose() * tp.value(a));
                  });
}

template <typename Scalar>
Var add(Tape<Scalar>& t, Var a, Var b) {
  if (t.value(a).rows() != t.value(b).rows() || t.value(a).cols() != t.value(b).cols()) {
    throw std::invalid_argument("add: shape mismatch");
  }
  return t.record(t.value(a) + t.value(b), {a, b}, [a, b](Tape<Scalar>& tp, const Matrix<Scalar>& g) {
    tp.add_grad(a, g);
    tp.add_grad(b, g);
  });
}

template <typename Scalar>
Var scale(Tape<Scalar>& t, Var a, Scalar s) {
  return t.record(t.value(a) * s, {a}, [a, s](Tape<Scalar>& tp, const Matrix<Scalar>& g) {
    tp.add_grad(a, g * s);
  });
}

/// Adds a 1 x n row to every row of `a`.
template <typename Scalar>
Var add_row(Tape<Scalar>& t, Var a, Var row) {
  Matrix<Scalar> out = t.value(a).rowwise() + t.value(row).row(0);
  return t.record(std::move(out), {a, row}, [a, row](Tape<Scalar>& tp, const Matrix<Scalar>& g) {
    tp.add_grad(a, g);
    if (tp.requires_grad(row)) tp.add_grad(row, g.colwise().sum());
  });
}

/// tanh approximation of GELU.
template <typename Scalar>
Var gelu(Tape<Scalar>& t, Var a) {
  static constexpr Scalar c = Scalar(0.7978845608028654);  // sqrt(2/pi)
  static constexpr Scalar k = Scalar(0.044715);
  const auto& x = t.value(a);
  Matrix<Scalar> th = (c * (x.array() + k * x.array().cube())).tanh().matrix();
  Matrix<Scalar> out = (Scalar(0.5) * x.array() * (Scalar(1) + th.array())).matrix();
  return t.record(std::move(out), {a}, [a, th = std::move(th)](Tape<Scalar>& tp, const Matrix<Scalar>& g) {
    const auto& x = tp.value(a).array();
    auto dth = (Scalar(1) - th.array().square()) * c * (Scalar(1) + Scalar(3) * k * x.square());
    auto d = Scalar(0.5) * (Scalar(1) + th.array()) + Scalar(0.5) * x * dth;
    tp.add_grad(a, (g.array() * d).matrix());
  });
}

/// Root-mean-square normalization with a learned 1 x d gain.
template <typename Scalar>
Var rms_norm(Tape<Scalar>& t, Var x, Var gain, Scalar eps = Scalar(1e-6)) {
  const auto& xv = t.value(x);
  const Eigen::Index d = xv.cols();
  Vector<Scalar> inv = ((xv.array().square().rowwise().sum() / Scalar(d)) + eps).rsqrt().matrix();
  Matrix<Scalar> xhat = inv.asDiagonal() * xv;
  Matrix<Scalar> out = xhat.array().rowwise() * t.value(gain).row(0).array();
  return t.record(std::move(out), {x, gain},
                  [x, gain, inv = std::move(inv), xhat = std::move(xhat)](Tape<Scalar>& tp,
                                                                          const Matrix<Scalar>& g) {
                    if (tp.requires_grad(gain)) {
                      tp.add_grad(gain, (g.array() * xhat.array()).colwise().sum().matrix());
                    }
                    if (tp.requires_grad(x)) {
                      const Eigen::Index d = xhat.cols();
                      Matrix<Scalar> dxhat = g.array().rowwise() * tp.value(gain).row(0).array();
                      Vector<Scalar> proj = (dxhat.array() * xhat.array()).rowwise().sum().matrix() / Scalar(d);
                      Matrix<Scalar> dx = inv.asDiagonal() * (dxhat - proj.asDiagonal() * xhat);
                      tp.add_grad(x, dx);
                    }
                  });
}

/// Row r of the output is the mean of table rows ids[r].
template <typename Scalar>
Var embed_mean(Tape<Scalar>& t, Var table, std::vector<std::vector<int>> ids) {
  const auto& tab = t.value(table);
  Matrix<Scalar> out = Matrix<Scalar>::Zero(static_cast<Eigen::Index>(ids.size()), tab.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r].empty()) throw std::invalid_argument("embed_mean: empty id list");
    for (int id : ids[r]) out.row(r) += tab.row(id);
    out.row(r) /= Scalar(ids[r].size());
  }
  return t.record(std::move(out), {table}, [table, ids = std::move(ids)](Tape<Scalar>& tp, const Matrix<Scalar>& g) {
    const auto& tab = tp.value(table);
    Matrix<Scalar> dtab = Matrix<Scalar>::Zero(tab.rows(), tab.cols());
    for (std::size_t r = 0; r < ids.size(); ++r) {
      const Scalar w = Scalar(1) / Scalar(ids[r].size());
      for (int id : ids[r]) dtab.row(id) += w * g.row(r);
    }
    tp.add_grad(table, dtab);
  });
}

template <typename Scalar>
Var concat_rows(Tape<Scalar>& t, const std::vector<Var>& parts) {
  Eigen::Index rows = 0;
  const Eigen::Index cols = t.value(parts.at(0)).cols();
  for (Var p : parts) {
    if (t.value(p).cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
    rows += t.value(p).rows();
  }
  Matrix<Scalar> out(rows, cols);
  Eigen::Index r = 0;
  for (Var p : parts) {
    const auto& v = t.value(p);
    out.middleRows(r, v.rows()) = v;
    r += v.rows();
  }
  return t.record(std::move(out), parts, [parts](Tape<Scalar>& tp, const Matrix<Scalar>& g) {
    Eigen::Index r = 0;
    for (Var p : parts) {
      const Eigen::Index n = tp.value(p).rows();
      if (tp.requires_grad(p)) tp.add_grad(p, g.middleRows(r, n));
      r += n;
    }
  });
}

template <typename Scalar>
Var slice_rows(Tape<Scalar>& t, Var a, Eigen::Index start, Eigen::Index count) {
  const auto& v = t.value(a);
  if (start < 0 || count < 0 || start + count > v.rows()) {
    throw std::out_of_range("slice_rows: range outside matrix");
  }
  Matrix<Scalar> out = v.middleRows(start, count);
  return t.record(std::move(out), {a}, [a, start, count](Tape<Scalar>& tp, const Matrix<Scalar>& g) {
    Matrix<Scalar> full = Matrix<Scalar>::Zero(tp.value(a).rows(), tp.value(a).cols());
    full.middleRows(start, count) = g;
    tp.add_grad(a, full);
  });
}

/// sum(a .* weights), a 1x1 result. Used to reduce outputs for gradient checks.
template <typename Scalar>
Var weighted_sum(Tape<Scalar>& t, Var a, Matrix<Scalar> weights) {
  Matrix<Scalar> out(1, 1);
  out(0, 0) = (t.value(a).array() * weights.array()).sum();
  return t.record(std::move(out), {a}, [a, w = std::move(weights)](Tape<Scalar>& tp, const Matrix<Scalar>& g) {
    tp.add_grad(a, w * g(0, 0));
  });
}

/// Summed token cross-entropy of row-wise logits; target -1 is ignored.
template <typename Scalar>
Var cross_entropy_sum(Tape<Scalar>& t, Var logits, std::vector<int> targets) {
  const auto& z = t.value(logits);
  if (static_cast<Eigen::Index>(targets.size()) != z.rows()) {
    throw std::invalid_argument("cross_entropy_sum: one target per row required");
  }
  Matrix<Scalar> probs(z.rows(), z.cols());
  Scalar loss = 0;
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const Scalar m = z.row(r).maxCoeff();
    probs.row(r) = (z.row(r).array() - m).exp().matrix();
    const Scalar s = probs.row(r).sum();
    probs.row(r) /= s;
    if (targets[r] >= 0) loss += std::log(s) + m - z(r, targets[r]);
  }
  Matrix<Scalar> out(1, 1);
  out(0, 0) = loss;
  return t.record(std::move(out), {logits},
                  [logits, targets = std::move(targets), probs = std::move(probs)](Tape<Scalar>& tp,
                                                                                   const Matrix<Scalar>& g) {
                    Matrix<Scalar> d = probs;
                    for (Eigen::Index r = 0; r < d.rows(); ++r) {
                      if (targets[r] < 0) {
                        d.row(r).setZero();
                      } else {
                        d(r, targets[r]) -= Scalar(1);
                      }
                    }
                    tp.add_grad(logits, d * g(0, 0));
                  });
}

// ---------------------------------------------------------------------------
// Multi-head scaled dot-product attention with additive bias and boolean mask.

/// Per-head attention probabilities captured during a forward pass.
template <typename Scalar>
struct AttentionRecord {
  std::vector<Matrix<Scalar>> weights;  ///< one L x S matrix per head
};

class MaskError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Row-wise masked softmax of `logits`; masked entries are exactly zero.
template <typename Scalar>
Matrix<Scalar> masked_softmax(const Matrix<Scalar>& logits, const Mask& mask) {
  Matrix<Scalar> p = Matrix<Scalar>::Zero(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Scalar m = -std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      if (mask(i, j)) m = std::max(m, logits(i, j));
    }
    if (m == -std::numeric_limits<Scalar>::infinity()) {
      throw MaskError("attention row " + std::to_string(i) + " has no allowed position");
    }
    Scalar s = 0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      if (mask(i, j)) {
        p(i, j) = std::exp(logits(i, j) - m);
        s += p(i, j);
      }
    }
    p.row(i) /= s;
  }
  return p;
}

/// Consecutive query rows sharing one set of allowed key columns.
struct MaskGroup {
  Eigen::Index row = 0;
  Eigen::Index rows = 0;
  std::vector<Eigen::Index> cols;
};

/// Row groups of a mask; a sparse mask such as frame-local attention turns
/// into a few dense blocks.
inline std::vector<MaskGroup> mask_groups(const Mask& mask) {
  std::vector<MaskGroup> groups;
  for (Eigen::Index i = 0; i < mask.rows(); ++i) {
    if (i > 0 && (mask.row(i) == mask.row(i - 1)).all()) {
      ++groups.back().rows;
      continue;
    }
    MaskGroup g;
    g.row = i;
    g.rows = 1;
    for (Eigen::Index j = 0; j < mask.cols(); ++j) {
      if (mask(i, j)) g.cols.push_back(j);
    }
    if (g.cols.empty()) throw MaskError("attention row " + std::to_string(i) + " has no allowed position");
    groups.push_back(std::move(g));
  }
  return groups;
}

namespace attention_detail {

template <typename Scalar>
Matrix<Scalar> gather_rows(const Matrix<Scalar>& m, const std::vector<Eigen::Index>& idx, Eigen::Index col,
                           Eigen::Index width) {
  Matrix<Scalar> out(static_cast<Eigen::Index>(idx.size()), width);
  for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(idx[r]).segment(col, width);
  return out;
}

template <typename Scalar>
void softmax_rows(Matrix<Scalar>& logits) {
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const Scalar m = logits.row(i).maxCoeff();
    logits.row(i) = (logits.row(i).array() - m).exp().matrix();
    logits.row(i) /= logits.row(i).sum();
  }
}

}  // namespace attention_detail

/// q: L x d, k, v: S x d with d = heads * d_z. bias (optional): (heads*L) x S,
/// head-major. Output: L x d, heads concatenated along columns. Masks that
/// allow under half of all pairs are evaluated block by block, so the cost
/// follows the number of allowed pairs.
template <typename Scalar>
Var attention(Tape<Scalar>& t, Var q, Var k, Var v, int heads, Var bias,
              std::shared_ptr<const Mask> mask, AttentionRecord<Scalar>* record = nullptr) {
  const auto& Q = t.value(q);
  const auto& K = t.value(k);
  const auto& V = t.value(v);
  const Eigen::Index L = Q.rows();
  const Eigen::Index S = K.rows();
  const Eigen::Index d = Q.cols();
  if (d % heads != 0 || K.cols() != d || V.cols() != d || V.rows() != S) {
    throw std::invalid_argument("attention: inconsistent shapes");
  }
  if (mask->rows() != L || mask->cols() != S) throw std::invalid_argument("attention: mask shape");
  if (bias.valid() && (t.value(bias).rows() != heads * L || t.value(bias).cols() != S)) {
    throw std::invalid_argument("attention: bias shape");
  }
  const Eigen::Index dz = d / heads;
  const Scalar inv = Scalar(1) / std::sqrt(Scalar(dz));
  std::vector<Var> parents{q, k, v};
  if (bias.valid()) parents.push_back(bias);

  if (2 * mask->count() >= L * S) {
    auto probs = std::make_shared<std::vector<Matrix<Scalar>>>(heads);
    Matrix<Scalar> out(L, d);
    for (int h = 0; h < heads; ++h) {
      Matrix<Scalar> logits = (Q.middleCols(h * dz, dz) * K.middleCols(h * dz, dz).transpose()) * inv;
      if (bias.valid()) logits += t.value(bias).middleRows(h * L, L);
      (*probs)[h] = masked_softmax(logits, *mask);
      out.middleCols(h * dz, dz) = (*probs)[h] * V.middleCols(h * dz, dz);
    }
    if (record != nullptr) record->weights = *probs;
    return t.record(std::move(out), parents,
                    [=](Tape<Scalar>& tp, const Matrix<Scalar>& g) {
                      const auto& Q = tp.value(q);
                      const auto& K = tp.value(k);
                      const auto& V = tp.value(v);
                      Matrix<Scalar> dQ = Matrix<Scalar>::Zero(L, d);
                      Matrix<Scalar> dK = Matrix<Scalar>::Zero(S, d);
                      Matrix<Scalar> dV = Matrix<Scalar>::Zero(S, d);
                      Matrix<Scalar> dB;
                      if (bias.valid()) dB.resize(heads * L, S);
                      for (int h = 0; h < heads; ++h) {
                        const auto& P = (*probs)[h];
                        const auto gh = g.middleCols(h * dz, dz);
                        dV.middleCols(h * dz, dz) = P.transpose() * gh;
                        Matrix<Scalar> dP = gh * V.middleCols(h * dz, dz).transpose();
                        Vector<Scalar> rowdot = (dP.array() * P.array()).rowwise().sum().matrix();
                        Matrix<Scalar> dS = (P.array() * (dP.colwise() - rowdot).array()).matrix();
                        dQ.middleCols(h * dz, dz) = dS * K.middleCols(h * dz, dz) * inv;
                        dK.middleCols(h * dz, dz) = dS.transpose() * Q.middleCols(h * dz, dz) * inv;
                        if (bias.valid()) dB.middleRows(h * L, L) = dS;
                      }
                      tp.add_grad(q, dQ);
                      tp.add_grad(k, dK);
                      tp.add_grad(v, dV);
                      if (bias.valid()) tp.add_grad(bias, dB);
                    });
  }

  // Block path: probabilities are kept per (head, group) over the group's columns.
  auto groups = std::make_shared<const std::vector<MaskGroup>>(mask_groups(*mask));
  const auto ng = groups->size();
  auto probs = std::make_shared<std::vector<Matrix<Scalar>>>(heads * ng);
  Matrix<Scalar> out(L, d);
  for (int h = 0; h < heads; ++h) {
    for (std::size_t gi = 0; gi < ng; ++gi) {
      const auto& grp = (*groups)[gi];
      const auto Kg = attention_detail::gather_rows(K, grp.cols, h * dz, dz);
      const auto Vg = attention_detail::gather_rows(V, grp.cols, h * dz, dz);
      Matrix<Scalar> logits = (Q.block(grp.row, h * dz, grp.rows, dz) * Kg.transpose()) * inv;
      if (bias.valid()) {
        const auto& B = t.value(bias);
        for (Eigen::Index r = 0; r < grp.rows; ++r) {
          for (std::size_t c = 0; c < grp.cols.size(); ++c) logits(r, c) += B(h * L + grp.row + r, grp.cols[c]);
        }
      }
      attention_detail::softmax_rows(logits);
      out.block(grp.row, h * dz, grp.rows, dz) = logits * Vg;
      (*probs)[h * ng + gi] = std::move(logits);
    }
  }
  if (record != nullptr) {
    record->weights.assign(heads, Matrix<Scalar>::Zero(L, S));
    for (int h = 0; h < heads; ++h) {
      for (std::size_t gi = 0; gi < ng; ++gi) {
        const auto& grp = (*groups)[gi];
        const auto& P = (*probs)[h * ng + gi];
        for (std::size_t c = 0; c < grp.cols.size(); ++c) {
          record->weights[h].block(grp.row, grp.cols[c], grp.rows, 1) = P.col(static_cast<Eigen::Index>(c));
        }
      }
    }
  }
  return t.record(std::move(out), parents, [=](Tape<Scalar>& tp, const Matrix<Scalar>& g) {
    const auto& Q = tp.value(q);
    const auto& K = tp.value(k);
    const auto& V = tp.value(v);
    Matrix<Scalar> dQ = Matrix<Scalar>::Zero(L, d);
    Matrix<Scalar> dK = Matrix<Scalar>::Zero(S, d);
    Matrix<Scalar> dV = Matrix<Scalar>::Zero(S, d);
    Matrix<Scalar> dB;
    if (bias.valid()) dB = Matrix<Scalar>::Zero(heads * L, S);
    for (int h = 0; h < heads; ++h) {
      for (std::size_t gi = 0; gi < ng; ++gi) {
        const auto& grp = (*groups)[gi];
        const auto& P = (*probs)[h * ng + gi];
        const auto Kg = attention_detail::gather_rows(K, grp.cols, h * dz, dz);
        const auto Vg = attention_detail::gather_rows(V, grp.cols, h * dz, dz);
        const auto gh = g.block(grp.row, h * dz, grp.rows, dz);
        const Matrix<Scalar> dVg = P.transpose() * gh;
        Matrix<Scalar> dP = gh * Vg.transpose();
        Vector<Scalar> rowdot = (dP.array() * P.array()).rowwise().sum().matrix();
        Matrix<Scalar> dS = (P.array() * (dP.colwise() - rowdot).array()).matrix();
        dQ.block(grp.row, h * dz, grp.rows, dz) += dS * Kg * inv;
        const Matrix<Scalar> dKg = dS.transpose() * Q.block(grp.row, h * dz, grp.rows, dz) * inv;
        for (std::size_t c = 0; c < grp.cols.size(); ++c) {
          const auto j = grp.cols[c];
          const auto ci = static_cast<Eigen::Index>(c);
          dK.row(j).segment(h * dz, dz) += dKg.row(ci);
          dV.row(j).segment(h * dz, dz) += dVg.row(ci);
          if (bias.valid()) dB.block(h * L + grp.row, j, grp.rows, 1) = dS.col(ci);
        }
      }
    }
    tp.add_grad(q, dQ);
    tp.add_grad(k, dK);
    tp.add_grad(v, dV);
    if (bias.valid()) tp.add_grad(bias, dB);
  });
}

}  // namespace tea::ad
