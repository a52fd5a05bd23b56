#pragma once

// OCR-enhanced relative spatial attention bias.
//
// For two entities i, j with anchor points (x, y) (top-left box corner) the
// per-granularity feature is [f_sin(x_i - x_j); f_cos(y_i - y_j)] of length
// 2*d_s, projected to one scalar per head by a learned 2*d_s x H matrix.
// Scene-text pairs sum the word, line and paragraph terms; every other
// non-padding pair uses the word term alone; pairs touching padding get 0.
//
// The sinusoids of differences factor through the angle-difference identities
//   sin(w(a-b)) = sin(wa)cos(wb) - cos(wa)sin(wb)
//   cos(w(a-b)) = cos(wa)cos(wb) + sin(wa)sin(wb)
// so each bias head is a rank-2*d_s product of per-entity tables instead of
// an L x L x 2*d_s feature tensor.

#include <array>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "tea/autodiff.hpp"
#include "tea/entities.hpp"

namespace tea {

enum class Granularity { Word = 0, Line = 1, Paragraph = 2 };
inline constexpr int kNumGranularities = 3;

enum class SinusoidKind { Sin, Cos };

class ConfigurationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SpatialBiasConfig {
  int d_s = 16;  ///< sinusoid features per axis, even
  int heads = 4;
  double base = 10000.0;
  double delta_scale = 100.0;  ///< S, applied to coordinate differences
  double init_std = 0.02;
  bool multi_granularity = true;  ///< false: word-level term only
  /// Adds cos(x_i - x_j) and sin(y_i - y_j) features after the sin(x) / cos(y)
  /// pair, so the bias can also express "same column" and vertical direction.
  bool all_phases = false;

  void validate() const {
    if (d_s <= 0 || d_s % 2 != 0) throw ConfigurationError("spatial bias d_s must be even and > 0");
    if (heads <= 0) throw ConfigurationError("spatial bias needs at least one head");
  }
  int feature_dim() const { return (all_phases ? 4 : 2) * d_s; }

  /// Angular frequency of component k, S / base^(2*floor(k/2)/d_s).
  double frequency(int k) const {
    return delta_scale / std::pow(base, 2.0 * static_cast<double>(k / 2) / static_cast<double>(d_s));
  }
};

/// Sinusoidal encoding of a scaled coordinate difference.
inline Vector<double> sinusoidal_features(double delta, const SpatialBiasConfig& cfg, SinusoidKind kind) {
  cfg.validate();
  Vector<double> out(cfg.d_s);
  for (int k = 0; k < cfg.d_s; ++k) {
    const double phase = delta * cfg.frequency(k);
    out(k) = kind == SinusoidKind::Sin ? std::sin(phase) : std::cos(phase);
  }
  return out;
}

/// Learned projections, one 2*d_s x H matrix per granularity.
template <typename Scalar>
struct SpatialBiasParams {
  SpatialBiasConfig config;
  std::array<Matrix<Scalar>, kNumGranularities> projection;

  static SpatialBiasParams random(const SpatialBiasConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    SpatialBiasParams p;
    p.config = cfg;
    std::normal_distribution<double> normal(0.0, cfg.init_std);
    for (auto& w : p.projection) {
      w.resize(cfg.feature_dim(), cfg.heads);
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<Scalar>(normal(rng));
    }
    return p;
  }
};

/// Bias of entity i towards entity j for one granularity, one value per head.
template <typename Scalar>
Vector<Scalar> pair_bias(const BoundingBox& box_i, const BoundingBox& box_j, const Matrix<Scalar>& projection,
                         const SpatialBiasConfig& cfg) {
  if (projection.rows() != cfg.feature_dim()) throw ConfigurationError("pair_bias: projection rows != feature_dim");
  const double dx = box_i.x_tl - box_j.x_tl, dy = box_i.y_tl - box_j.y_tl;
  Vector<double> feat(cfg.feature_dim());
  if (cfg.all_phases) {
    feat << sinusoidal_features(dx, cfg, SinusoidKind::Sin), sinusoidal_features(dy, cfg, SinusoidKind::Cos),
        sinusoidal_features(dx, cfg, SinusoidKind::Cos), sinusoidal_features(dy, cfg, SinusoidKind::Sin);
  } else {
    feat << sinusoidal_features(dx, cfg, SinusoidKind::Sin), sinusoidal_features(dy, cfg, SinusoidKind::Cos);
  }
  return projection.transpose() * feat.cast<Scalar>();
}

/// H x L x L bias over an entity sequence.
template <typename Scalar>
struct SpatialBiasTensor {
  std::vector<Matrix<Scalar>> values;  ///< one L x L matrix per head

  int heads() const { return static_cast<int>(values.size()); }
  Eigen::Index length() const { return values.empty() ? 0 : values.front().rows(); }
  Scalar operator()(int h, Eigen::Index i, Eigen::Index j) const { return values[h](i, j); }
};

/// Per-entity sin/cos tables of the scaled anchor coordinates, one set per
/// granularity. Rows of slots that do not take part in a granularity are zero.
template <typename Scalar>
struct SpatialTables {
  Eigen::Index length = 0;
  std::array<bool, kNumGranularities> active{};
  bool extra = false;  ///< all_phases features present
  std::array<Matrix<Scalar>, kNumGranularities> sin_x, cos_x, sin_y, cos_y;
};

template <typename Scalar>
SpatialTables<Scalar> spatial_tables(const EntitySequence& seq, const SpatialBiasConfig& cfg) {
  cfg.validate();
  SpatialTables<Scalar> tab;
  const Eigen::Index L = seq.size();
  tab.length = L;
  tab.extra = cfg.all_phases;
  Vector<double> freq(cfg.d_s);
  for (int k = 0; k < cfg.d_s; ++k) freq(k) = cfg.frequency(k);
  for (int g = 0; g < kNumGranularities; ++g) {
    tab.active[g] = g == 0 || cfg.multi_granularity;
    for (auto* m : {&tab.sin_x[g], &tab.cos_x[g], &tab.sin_y[g], &tab.cos_y[g]}) {
      m->setZero(L, cfg.d_s);
    }
    if (!tab.active[g]) continue;
    for (Eigen::Index i = 0; i < L; ++i) {
      const auto& slot = seq.slots[i];
      if (slot.is_padding()) continue;
      const BoundingBox* box = &slot.word_box;
      if (g > 0) {
        if (!slot.is_scene_text) continue;
        const auto& opt = g == 1 ? slot.line_box : slot.para_box;
        if (!opt) {
          throw ConfigurationError("scene text '" + slot.text + "' has no " +
                                   (g == 1 ? std::string("line") : std::string("paragraph")) + " box");
        }
        box = &*opt;
      }
      for (int k = 0; k < cfg.d_s; ++k) {
        const double px = freq(k) * box->x_tl;
        const double py = freq(k) * box->y_tl;
        tab.sin_x[g](i, k) = static_cast<Scalar>(std::sin(px));
        tab.cos_x[g](i, k) = static_cast<Scalar>(std::cos(px));
        tab.sin_y[g](i, k) = static_cast<Scalar>(std::sin(py));
        tab.cos_y[g](i, k) = static_cast<Scalar>(std::cos(py));
      }
    }
  }
  return tab;
}

namespace detail {

/// Adds the granularity-g bias of every head into out (heads*L x L, head-major).
template <typename Scalar>
void accumulate_bias(const SpatialTables<Scalar>& tab, int g, const Matrix<Scalar>& w, Matrix<Scalar>& out,
                     Eigen::Index stride) {
  const Eigen::Index L = tab.length;
  const Eigen::Index ds = tab.sin_x[g].cols();
  const Eigen::Index heads = w.cols();
  const bool extra = tab.extra;
  if (w.rows() != (extra ? 4 : 2) * ds) throw ConfigurationError("spatial bias: projection rows do not match features");
  const Eigen::Index width = (extra ? 8 : 4) * ds;
  Matrix<Scalar> left(L, width);
  Matrix<Scalar> right(L, width);
  for (Eigen::Index h = 0; h < heads; ++h) {
    const auto wx = w.col(h).segment(0, ds).transpose();
    const auto wy = w.col(h).segment(ds, ds).transpose();
    // sum_k wx_k (sx_i cx_j - cx_i sx_j) + wy_k (cy_i cy_j + sy_i sy_j)
    left.leftCols(4 * ds) << tab.sin_x[g].array().rowwise() * wx.array(),
        -(tab.cos_x[g].array().rowwise() * wx.array()), tab.cos_y[g].array().rowwise() * wy.array(),
        tab.sin_y[g].array().rowwise() * wy.array();
    right.leftCols(4 * ds) << tab.cos_x[g], tab.sin_x[g], tab.cos_y[g], tab.sin_y[g];
    if (extra) {
      // + wcx_k (cx_i cx_j + sx_i sx_j) + wsy_k (sy_i cy_j - cy_i sy_j)
      const auto wcx = w.col(h).segment(2 * ds, ds).transpose();
      const auto wsy = w.col(h).segment(3 * ds, ds).transpose();
      left.rightCols(4 * ds) << tab.cos_x[g].array().rowwise() * wcx.array(),
          tab.sin_x[g].array().rowwise() * wcx.array(), tab.sin_y[g].array().rowwise() * wsy.array(),
          -(tab.cos_y[g].array().rowwise() * wsy.array());
      right.rightCols(4 * ds) << tab.cos_x[g], tab.sin_x[g], tab.cos_y[g], tab.sin_y[g];
    }
    out.block(h * stride, 0, L, L).noalias() += left * right.transpose();
  }
}

/// d(loss)/d(projection) given d(loss)/d(bias) for one granularity.
template <typename Scalar>
Matrix<Scalar> projection_grad(const SpatialTables<Scalar>& tab, int g, const Matrix<Scalar>& dbias,
                               Eigen::Index stride, Eigen::Index heads) {
  const Eigen::Index L = tab.length;
  const Eigen::Index ds = tab.sin_x[g].cols();
  const bool extra = tab.extra;
  Matrix<Scalar> dw((extra ? 4 : 2) * ds, heads);
  for (Eigen::Index h = 0; h < heads; ++h) {
    const auto G = dbias.block(h * stride, 0, L, L);
    Matrix<Scalar> gcx = G * tab.cos_x[g];
    Matrix<Scalar> gsx = G * tab.sin_x[g];
    Matrix<Scalar> gcy = G * tab.cos_y[g];
    Matrix<Scalar> gsy = G * tab.sin_y[g];
    dw.col(h).segment(0, ds) =
        ((tab.sin_x[g].array() * gcx.array()) - (tab.cos_x[g].array() * gsx.array())).colwise().sum().transpose().matrix();
    dw.col(h).segment(ds, ds) =
        ((tab.cos_y[g].array() * gcy.array()) + (tab.sin_y[g].array() * gsy.array())).colwise().sum().transpose().matrix();
    if (extra) {
      dw.col(h).segment(2 * ds, ds) = ((tab.cos_x[g].array() * gcx.array()) + (tab.sin_x[g].array() * gsx.array()))
                                          .colwise()
                                          .sum()
                                          .transpose()
                                          .matrix();
      dw.col(h).segment(3 * ds, ds) = ((tab.sin_y[g].array() * gcy.array()) - (tab.cos_y[g].array() * gsy.array()))
                                          .colwise()
                                          .sum()
                                          .transpose()
                                          .matrix();
    }
  }
  return dw;
}

}  // namespace detail

/// Full bias tensor for a sequence (inference path, no tape).
template <typename Scalar>
SpatialBiasTensor<Scalar> bias_tensor(const EntitySequence& seq, const SpatialBiasParams<Scalar>& params) {
  const auto& cfg = params.config;
  const auto tab = spatial_tables<Scalar>(seq, cfg);
  const Eigen::Index L = tab.length;
  Matrix<Scalar> stacked = Matrix<Scalar>::Zero(cfg.heads * L, L);
  for (int g = 0; g < kNumGranularities; ++g) {
    if (tab.active[g]) detail::accumulate_bias(tab, g, params.projection[g], stacked, L);
  }
  SpatialBiasTensor<Scalar> out;
  for (int h = 0; h < cfg.heads; ++h) out.values.push_back(stacked.middleRows(h * L, L));
  return out;
}

/// Tape op: (heads*total) x total head-major bias whose leading L x L block of
/// each head holds the spatial bias and whose remaining entries are zero.
/// `projections` are parameter vars, one per granularity.
template <typename Scalar>
ad::Var spatial_bias_op(ad::Tape<Scalar>& t, std::shared_ptr<const SpatialTables<Scalar>> tab,
                        const std::array<ad::Var, kNumGranularities>& projections, Eigen::Index total) {
  const Eigen::Index heads = t.value(projections[0]).cols();
  Matrix<Scalar> out = Matrix<Scalar>::Zero(heads * total, total);
  std::vector<ad::Var> parents;
  for (int g = 0; g < kNumGranularities; ++g) {
    if (!tab->active[g]) continue;
    detail::accumulate_bias(*tab, g, t.value(projections[g]), out, total);
    parents.push_back(projections[g]);
  }
  return t.record(std::move(out), parents,
                  [tab, projections, total, heads](ad::Tape<Scalar>& tp, const Matrix<Scalar>& g) {
                    for (int k = 0; k < kNumGranularities; ++k) {
                      if (!tab->active[k] || !tp.requires_grad(projections[k])) continue;
                      tp.add_grad(projections[k], detail::projection_grad(*tab, k, g, total, heads));
                    }
                  });
}

}  // namespace tea
