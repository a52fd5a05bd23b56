#pragma once

// Residual temporal convolution adapter over the frame x slot entity grid:
//   v' = v + Conv2D(v W_down) W_up
// with 'same' zero padding on both grid axes. W_up starts at zero so a fresh
// adapter is the identity map.

#include <random>
#include <stdexcept>
#include <string>

#include "tea/autodiff.hpp"

namespace tea {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TemporalAdapterConfig {
  int reduction = 4;   ///< r, bottleneck width is d / r
  int kernel_t = 3;    ///< k_T, frame axis
  int kernel_e = 3;    ///< k_E, slot axis
  bool depthwise = true;

  void validate(int d) const {
    if (reduction <= 0 || d % reduction != 0) throw ShapeError("adapter: d must be divisible by r");
    if (kernel_t <= 0 || kernel_e <= 0 || kernel_t % 2 == 0 || kernel_e % 2 == 0) {
      throw ShapeError("adapter: kernel sizes must be odd and positive");
    }
  }
  int taps() const { return kernel_t * kernel_e; }
};

/// T x S grid view over a (T*S) x d matrix; cell (t, s) is row t*S + s.
struct GridShape {
  int frames = 0;  ///< T
  int slots = 0;   ///< S = M + N
  Eigen::Index rows() const { return static_cast<Eigen::Index>(frames) * slots; }
  Eigen::Index row(int t, int s) const { return static_cast<Eigen::Index>(t) * slots + s; }
};

template <typename Scalar>
class EntityGrid {
 public:
  EntityGrid(Matrix<Scalar> rows, GridShape shape) : data_(std::move(rows)), shape_(shape) {}

  const GridShape& shape() const { return shape_; }
  Eigen::Index width() const { return data_.cols(); }
  auto cell(int t, int s) { return data_.row(shape_.row(t, s)); }
  auto cell(int t, int s) const { return data_.row(shape_.row(t, s)); }
  Scalar operator()(int t, int s, Eigen::Index c) const { return data_(shape_.row(t, s), c); }
  const Matrix<Scalar>& flat() const { return data_; }
  Matrix<Scalar>& flat() { return data_; }

 private:
  Matrix<Scalar> data_;
  GridShape shape_;
};

template <typename Scalar>
EntityGrid<Scalar> reshape_to_grid(Matrix<Scalar> v, int frames, int slots) {
  GridShape shape{frames, slots};
  if (frames < 1 || slots < 1 || v.rows() != shape.rows()) {
    throw ShapeError("reshape_to_grid: expected " + std::to_string(shape.rows()) + " rows, got " +
                     std::to_string(v.rows()));
  }
  return EntityGrid<Scalar>(std::move(v), shape);
}

template <typename Scalar>
Matrix<Scalar> flatten_grid(const EntityGrid<Scalar>& grid) {
  return grid.flat();
}

template <typename Scalar>
struct TemporalAdapterParams {
  TemporalAdapterConfig config;
  Matrix<Scalar> down;    ///< d x c
  Matrix<Scalar> kernel;  ///< c x taps (depthwise) or c x (c * taps), tap index dt*k_E + ds
  Matrix<Scalar> bias;    ///< 1 x c
  Matrix<Scalar> up;      ///< c x d

  int channels() const { return static_cast<int>(down.cols()); }

  /// Fresh adapter: random down-projection and kernel, zero bias and up-projection.
  static TemporalAdapterParams init(int d, const TemporalAdapterConfig& cfg, std::mt19937_64& rng) {
    cfg.validate(d);
    const int c = d / cfg.reduction;
    TemporalAdapterParams p;
    p.config = cfg;
    auto fill = [&](Matrix<Scalar>& m, Eigen::Index rows, Eigen::Index cols, double stddev) {
      std::normal_distribution<double> normal(0.0, stddev);
      m.resize(rows, cols);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(normal(rng));
    };
    fill(p.down, d, c, 1.0 / std::sqrt(static_cast<double>(d)));
    const int fan_in = cfg.depthwise ? cfg.taps() : c * cfg.taps();
    fill(p.kernel, c, cfg.depthwise ? cfg.taps() : c * cfg.taps(), 1.0 / std::sqrt(static_cast<double>(fan_in)));
    p.bias = Matrix<Scalar>::Zero(1, c);
    p.up = Matrix<Scalar>::Zero(c, d);
    return p;
  }
};

template <typename Scalar>
struct TemporalAdapterGrads {
  Matrix<Scalar> input, down, kernel, bias, up;
};

namespace detail {

/// Conv over the grid of a (T*S) x c feature map, 'same' zero padding.
template <typename Scalar>
Matrix<Scalar> grid_conv(const Matrix<Scalar>& z, GridShape shape, const Matrix<Scalar>& kernel,
                         const Matrix<Scalar>& bias, const TemporalAdapterConfig& cfg) {
  const Eigen::Index c = z.cols();
  const int pt = cfg.kernel_t / 2;
  const int pe = cfg.kernel_e / 2;
  Matrix<Scalar> y(z.rows(), c);
  y.rowwise() = bias.row(0);
  for (int t = 0; t < shape.frames; ++t) {
    for (int s = 0; s < shape.slots; ++s) {
      auto out = y.row(shape.row(t, s));
      for (int dt = 0; dt < cfg.kernel_t; ++dt) {
        const int tt = t + dt - pt;
        if (tt < 0 || tt >= shape.frames) continue;
        for (int de = 0; de < cfg.kernel_e; ++de) {
          const int ss = s + de - pe;
          if (ss < 0 || ss >= shape.slots) continue;
          const int tap = dt * cfg.kernel_e + de;
          const auto src = z.row(shape.row(tt, ss));
          if (cfg.depthwise) {
            out.array() += kernel.col(tap).transpose().array() * src.array();
          } else {
            // kernel(o, i*taps + tap)
            for (Eigen::Index o = 0; o < c; ++o) {
              Scalar acc = 0;
              for (Eigen::Index i = 0; i < c; ++i) acc += kernel(o, i * cfg.taps() + tap) * src(i);
              out(o) += acc;
            }
          }
        }
      }
    }
  }
  return y;
}

}  // namespace detail

template <typename Scalar>
void check_finite(const Matrix<Scalar>& m, GridShape shape, const char* what) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (!std::isfinite(static_cast<double>(m(r, c)))) {
        throw NumericError(std::string(what) + ": non-finite value at frame " +
                           std::to_string(r / shape.slots) + ", slot " + std::to_string(r % shape.slots) +
                           ", channel " + std::to_string(c));
      }
    }
  }
}

template <typename Scalar>
EntityGrid<Scalar> temporal_conv_forward(const EntityGrid<Scalar>& grid, const TemporalAdapterParams<Scalar>& p) {
  const auto shape = grid.shape();
  check_finite(grid.flat(), shape, "temporal adapter input");
  const Matrix<Scalar> z = grid.flat() * p.down;
  const Matrix<Scalar> y = detail::grid_conv(z, shape, p.kernel, p.bias, p.config);
  return EntityGrid<Scalar>(grid.flat() + y * p.up, shape);
}

/// Analytic gradients of the adapter given d(loss)/d(output).
template <typename Scalar>
TemporalAdapterGrads<Scalar> temporal_conv_backward(const EntityGrid<Scalar>& grid, const Matrix<Scalar>& upstream,
                                                    const TemporalAdapterParams<Scalar>& p) {
  const auto shape = grid.shape();
  const auto& cfg = p.config;
  if (upstream.rows() != grid.flat().rows() || upstream.cols() != grid.width()) {
    throw ShapeError("temporal_conv_backward: upstream gradient shape mismatch");
  }
  const Matrix<Scalar> z = grid.flat() * p.down;
  const Matrix<Scalar> y = detail::grid_conv(z, shape, p.kernel, p.bias, cfg);
  const Eigen::Index c = z.cols();
  const int pt = cfg.kernel_t / 2;
  const int pe = cfg.kernel_e / 2;

  TemporalAdapterGrads<Scalar> g;
  g.up = y.transpose() * upstream;
  const Matrix<Scalar> dy = upstream * p.up.transpose();
  g.bias = dy.colwise().sum();
  g.kernel = Matrix<Scalar>::Zero(p.kernel.rows(), p.kernel.cols());
  Matrix<Scalar> dz = Matrix<Scalar>::Zero(z.rows(), c);
  for (int t = 0; t < shape.frames; ++t) {
    for (int s = 0; s < shape.slots; ++s) {
      const auto gout = dy.row(shape.row(t, s));
      for (int dt = 0; dt < cfg.kernel_t; ++dt) {
        const int tt = t + dt - pt;
        if (tt < 0 || tt >= shape.frames) continue;
        for (int de = 0; de < cfg.kernel_e; ++de) {
          const int ss = s + de - pe;
          if (ss < 0 || ss >= shape.slots) continue;
          const int tap = dt * cfg.kernel_e + de;
          const Eigen::Index src = shape.row(tt, ss);
          if (cfg.depthwise) {
            g.kernel.col(tap).array() += (gout.array() * z.row(src).array()).transpose();
            dz.row(src).array() += gout.array() * p.kernel.col(tap).transpose().array();
          } else {
            for (Eigen::Index o = 0; o < c; ++o) {
              for (Eigen::Index i = 0; i < c; ++i) {
                g.kernel(o, i * cfg.taps() + tap) += gout(o) * z(src, i);
                dz(src, i) += gout(o) * p.kernel(o, i * cfg.taps() + tap);
              }
            }
          }
        }
      }
    }
  }
  g.down = grid.flat().transpose() * dz;
  g.input = upstream + dz * p.down.transpose();
  return g;
}

/// Parameter vars of one adapter instance on a tape.
struct AdapterVars {
  ad::Var down, kernel, bias, up;
};

/// Tape op: applies the adapter to rows [0, shape.rows()) of x and passes the
/// remaining rows (question tokens) through unchanged.
template <typename Scalar>
ad::Var temporal_adapter_op(ad::Tape<Scalar>& t, ad::Var x, AdapterVars vars, GridShape shape,
                            const TemporalAdapterConfig& cfg) {
  const auto& xv = t.value(x);
  const Eigen::Index L = shape.rows();
  if (xv.rows() < L) throw ShapeError("temporal_adapter_op: fewer rows than grid cells");
  TemporalAdapterParams<Scalar> p{cfg, t.value(vars.down), t.value(vars.kernel), t.value(vars.bias), t.value(vars.up)};
  EntityGrid<Scalar> grid(xv.topRows(L), shape);
  Matrix<Scalar> out = xv;
  out.topRows(L) = temporal_conv_forward(grid, p).flat();
  return t.record(std::move(out), {x, vars.down, vars.kernel, vars.bias, vars.up},
                  [x, vars, shape, cfg](ad::Tape<Scalar>& tp, const Matrix<Scalar>& g) {
                    const Eigen::Index L = shape.rows();
                    TemporalAdapterParams<Scalar> p{cfg, tp.value(vars.down), tp.value(vars.kernel),
                                                    tp.value(vars.bias), tp.value(vars.up)};
                    EntityGrid<Scalar> grid(tp.value(x).topRows(L), shape);
                    auto grads = temporal_conv_backward(grid, Matrix<Scalar>(g.topRows(L)), p);
                    if (tp.requires_grad(x)) {
                      Matrix<Scalar> dx = g;
                      dx.topRows(L) = grads.input;
                      tp.add_grad(x, dx);
                    }
                    tp.add_grad(vars.down, grads.down);
                    tp.add_grad(vars.kernel, grads.kernel);
                    tp.add_grad(vars.bias, grads.bias);
                    tp.add_grad(vars.up, grads.up);
                  });
}

}  // namespace tea
