#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "tea/temporal_adapter.hpp"

using namespace tea;

namespace {

Matrix<double> randn(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double s = 1.0) {
  std::normal_distribution<double> n(0.0, s);
  Matrix<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

TemporalAdapterParams<double> trained_params(std::mt19937_64& rng, int d, const TemporalAdapterConfig& cfg) {
  auto p = TemporalAdapterParams<double>::init(d, cfg, rng);
  p.up = randn(rng, p.up.rows(), p.up.cols(), 0.5);
  p.bias = randn(rng, 1, p.bias.cols(), 0.5);
  return p;
}

// Oracle: explicit 3-D index loops over a zero-padded T x S x c volume.
Matrix<double> naive_adapter(const Matrix<double>& v, int T, int S, const TemporalAdapterParams<double>& p) {
  const auto& cfg = p.config;
  const int c = p.channels();
  const int d = static_cast<int>(v.cols());
  std::vector<double> z(static_cast<std::size_t>(T) * S * c, 0.0);
  for (int t = 0; t < T; ++t)
    for (int s = 0; s < S; ++s)
      for (int o = 0; o < c; ++o) {
        double acc = 0.0;
        for (int i = 0; i < d; ++i) acc += v(t * S + s, i) * p.down(i, o);
        z[(t * S + s) * c + o] = acc;
      }
  Matrix<double> out = v;
  for (int t = 0; t < T; ++t)
    for (int s = 0; s < S; ++s) {
      std::vector<double> y(c, 0.0);
      for (int o = 0; o < c; ++o) {
        double acc = p.bias(0, o);
        for (int dt = -(cfg.kernel_t / 2); dt <= cfg.kernel_t / 2; ++dt)
          for (int de = -(cfg.kernel_e / 2); de <= cfg.kernel_e / 2; ++de) {
            const int tt = t + dt, ss = s + de;
            if (tt < 0 || tt >= T || ss < 0 || ss >= S) continue;
            const int tap = (dt + cfg.kernel_t / 2) * cfg.kernel_e + (de + cfg.kernel_e / 2);
            if (cfg.depthwise) {
              acc += p.kernel(o, tap) * z[(tt * S + ss) * c + o];
            } else {
              for (int i = 0; i < c; ++i) acc += p.kernel(o, i * cfg.taps() + tap) * z[(tt * S + ss) * c + i];
            }
          }
        y[o] = acc;
      }
      for (int j = 0; j < d; ++j)
        for (int o = 0; o < c; ++o) out(t * S + s, j) += y[o] * p.up(o, j);
    }
  return out;
}

}  // namespace

TEST(TemporalAdapter, IdentityAtInit) {
  std::mt19937_64 rng(0);
  for (int n = 0; n < 100; ++n) {
    const int T = 1 + n % 6, S = 1 + (n * 5) % 12, d = 4 * (1 + n % 16);
    const auto p = TemporalAdapterParams<double>::init(d, TemporalAdapterConfig{}, rng);
    const Matrix<double> v = randn(rng, T * S, d);
    const auto out = temporal_conv_forward(reshape_to_grid(v, T, S), p);
    ASSERT_LE((out.flat() - v).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(TemporalAdapter, SingleCellGridIsIdentityAtInit) {
  std::mt19937_64 rng(1);
  const auto p = TemporalAdapterParams<double>::init(8, TemporalAdapterConfig{}, rng);
  const Matrix<double> v = randn(rng, 1, 8);
  EXPECT_EQ(temporal_conv_forward(reshape_to_grid(v, 1, 1), p).flat(), v);
}

TEST(TemporalAdapter, DepthwiseMatchesLoopOracle) {
  std::mt19937_64 rng(2);
  for (int n = 0; n < 20; ++n) {
    const int T = 1 + n % 5, S = 1 + n % 7;
    TemporalAdapterConfig cfg;
    const auto p = trained_params(rng, 16, cfg);
    const Matrix<double> v = randn(rng, T * S, 16);
    const auto out = temporal_conv_forward(reshape_to_grid(v, T, S), p).flat();
    EXPECT_LE((out - naive_adapter(v, T, S, p)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(TemporalAdapter, FullConvAndWideKernelMatchLoopOracle) {
  std::mt19937_64 rng(3);
  TemporalAdapterConfig cfg;
  cfg.depthwise = false;
  cfg.kernel_t = 5;
  cfg.kernel_e = 1;
  cfg.reduction = 2;
  const auto p = trained_params(rng, 8, cfg);
  const Matrix<double> v = randn(rng, 6 * 3, 8);
  const auto out = temporal_conv_forward(reshape_to_grid(v, 6, 3), p).flat();
  EXPECT_LE((out - naive_adapter(v, 6, 3, p)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(TemporalAdapter, ReceptiveFieldIsThreeByThree) {
  std::mt19937_64 rng(4);
  const auto p = trained_params(rng, 8, TemporalAdapterConfig{});
  const int T = 6, S = 5;
  const Matrix<double> v = randn(rng, T * S, 8);
  const auto base = temporal_conv_forward(reshape_to_grid(v, T, S), p).flat();
  Matrix<double> moved = v;
  moved.row(3 * S + 2) += randn(rng, 1, 8);
  const auto after = temporal_conv_forward(reshape_to_grid(moved, T, S), p).flat();
  for (int t = 0; t < T; ++t) {
    for (int s = 0; s < S; ++s) {
      const double diff = (after.row(t * S + s) - base.row(t * S + s)).cwiseAbs().maxCoeff();
      if (std::abs(t - 3) <= 1 && std::abs(s - 2) <= 1) {
        EXPECT_GT(diff, 0.0) << t << "," << s;
      } else {
        EXPECT_EQ(diff, 0.0) << t << "," << s;
      }
    }
  }
}

TEST(TemporalAdapter, ZeroPaddingAtGridBorder) {
  // With an all-ones kernel and identity projections the corner output is the
  // sum of its 4 in-range neighbours (2x2), not 9.
  TemporalAdapterConfig cfg;
  cfg.reduction = 1;
  TemporalAdapterParams<double> p;
  p.config = cfg;
  p.down = Matrix<double>::Identity(2, 2);
  p.up = Matrix<double>::Identity(2, 2);
  p.kernel = Matrix<double>::Ones(2, 9);
  p.bias = Matrix<double>::Zero(1, 2);
  const Matrix<double> v = Matrix<double>::Ones(3 * 3, 2);
  const auto out = temporal_conv_forward(reshape_to_grid(v, 3, 3), p).flat();
  EXPECT_DOUBLE_EQ(out(0, 0), 1.0 + 4.0);
  EXPECT_DOUBLE_EQ(out(1, 0), 1.0 + 6.0);
  EXPECT_DOUBLE_EQ(out(4, 0), 1.0 + 9.0);
}

TEST(TemporalAdapter, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  TemporalAdapterConfig cfg;
  const auto p = trained_params(rng, 8, cfg);
  const int T = 3, S = 4;
  const Matrix<double> v = randn(rng, T * S, 8);
  const Matrix<double> up = randn(rng, T * S, 8);
  auto loss = [&](const Matrix<double>& x, const TemporalAdapterParams<double>& q) {
    return (temporal_conv_forward(reshape_to_grid(x, T, S), q).flat().array() * up.array()).sum();
  };
  const auto g = temporal_conv_backward(reshape_to_grid(v, T, S), up, p);
  const double h = 1e-5;
  auto rel = [](double a, double b) { return std::abs(a - b) / (std::abs(a) + std::abs(b) + 1e-8); };
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    Matrix<double> a = v, b = v;
    a.data()[i] += h;
    b.data()[i] -= h;
    EXPECT_LT(rel(g.input.data()[i], (loss(a, p) - loss(b, p)) / (2 * h)), 1e-6);
  }
  for (auto member : {&TemporalAdapterParams<double>::down, &TemporalAdapterParams<double>::kernel,
                      &TemporalAdapterParams<double>::bias, &TemporalAdapterParams<double>::up}) {
    const Matrix<double>& analytic = member == &TemporalAdapterParams<double>::down     ? g.down
                                     : member == &TemporalAdapterParams<double>::kernel ? g.kernel
                                     : member == &TemporalAdapterParams<double>::bias   ? g.bias
                                                                                         : g.up;
    for (Eigen::Index i = 0; i < (p.*member).size(); ++i) {
      auto a = p, b = p;
      (a.*member).data()[i] += h;
      (b.*member).data()[i] -= h;
      EXPECT_LT(rel(analytic.data()[i], (loss(v, a) - loss(v, b)) / (2 * h)), 1e-6);
    }
  }
}

TEST(TemporalAdapter, ZeroUpstreamGivesZeroGradients) {
  std::mt19937_64 rng(6);
  const auto p = trained_params(rng, 8, TemporalAdapterConfig{});
  const Matrix<double> v = randn(rng, 12, 8);
  const auto g = temporal_conv_backward(reshape_to_grid(v, 3, 4), Matrix<double>(Matrix<double>::Zero(12, 8)), p);
  EXPECT_TRUE(g.input.isZero(0));
  EXPECT_TRUE(g.down.isZero(0));
  EXPECT_TRUE(g.kernel.isZero(0));
  EXPECT_TRUE(g.bias.isZero(0));
  EXPECT_TRUE(g.up.isZero(0));
}

TEST(TemporalAdapter, Errors) {
  std::mt19937_64 rng(7);
  EXPECT_THROW(reshape_to_grid(Matrix<double>(Matrix<double>::Zero(10, 4)), 3, 4), ShapeError);
  TemporalAdapterConfig even;
  even.kernel_t = 2;
  EXPECT_THROW(TemporalAdapterParams<double>::init(8, even, rng), ShapeError);
  TemporalAdapterConfig r3;
  r3.reduction = 3;
  EXPECT_THROW(TemporalAdapterParams<double>::init(8, r3, rng), ShapeError);
  const auto p = TemporalAdapterParams<double>::init(4, TemporalAdapterConfig{}, rng);
  Matrix<double> v = Matrix<double>::Zero(4, 4);
  v(3, 1) = std::numeric_limits<double>::quiet_NaN();
  try {
    temporal_conv_forward(reshape_to_grid(v, 2, 2), p);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("frame 1, slot 1"), std::string::npos) << e.what();
  }
}

TEST(TemporalAdapter, TapeOpPassesQuestionRowsThrough) {
  std::mt19937_64 rng(8);
  TemporalAdapterConfig cfg;
  const auto p = trained_params(rng, 8, cfg);
  const Matrix<double> x = randn(rng, 6 + 3, 8);
  ad::Tape<double> t;
  const auto xv = t.input(x);
  AdapterVars vars{t.input(p.down), t.input(p.kernel), t.input(p.bias), t.input(p.up)};
  const auto y = temporal_adapter_op(t, xv, vars, GridShape{2, 3}, cfg);
  const auto expect = temporal_conv_forward(reshape_to_grid(Matrix<double>(x.topRows(6)), 2, 3), p).flat();
  EXPECT_LE((t.value(y).topRows(6) - expect).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_EQ(t.value(y).bottomRows(3), x.bottomRows(3));
}
