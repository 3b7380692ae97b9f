#include <gtest/gtest.h>

#include "danlab/dan.hpp"
#include "danlab/error.hpp"

using namespace danlab;

namespace {

Matrix leaky(const Matrix& x, double slope) {
  Matrix y = x;
  for (Index k = 0; k < y.size(); ++k) {
    if (y.data()[k] < 0.0) y.data()[k] *= slope;
  }
  return y;
}

// Hand-composed residual stack.
Matrix manual_stack(const dan::DanParams& p, const std::string& net, Matrix x) {
  const auto& cfg = p.config();
  for (std::int64_t k = 0; k < cfg.depth; ++k) {
    const std::string pre = net + ".block" + std::to_string(k);
    const Matrix w = p.view(pre + ".weight");
    const Vector b = p.view(pre + ".bias");
    const double gate = p.view(pre + ".gate")(0, 0);
    Matrix a = w * x;
    a.colwise() += b;
    x = x + gate * leaky(a, cfg.slope);
  }
  Matrix out = Matrix(p.view(net + ".out.weight")) * x;
  out.colwise() += Vector(p.view(net + ".out.bias"));
  return out;
}

Matrix manual_analyzer(const dan::DanParams& p, const Matrix& h, const Matrix& y) {
  Matrix z(h.rows() + y.rows(), h.cols());
  z << h, y;
  return manual_stack(p, "analyzer", z);
}

Matrix manual_procoder(const dan::DanParams& p, const Matrix& h) {
  Matrix v = Matrix(p.view("procoder.weight")) * h;
  v.colwise() += Vector(p.view("procoder.bias"));
  return v;
}

dan::DanParams random_params(const dan::DanConfig& cfg, std::uint64_t seed) {
  dan::DanParams p = dan::init_params(cfg, seed);
  Rng rng(seed + 100);
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  for (const auto& s : p.layout().slices()) {
    if (s.name.ends_with(".gate")) p.view(s.name)(0, 0) = u(rng);
  }
  return p;
}

double max_abs(const Matrix& a) { return a.cwiseAbs().maxCoeff(); }

}  // namespace

TEST(RezeroBlock, ZeroGateIsIdentity) {
  Rng rng(1);
  const Matrix x = gauss::standard_normal(4, 3, rng);
  const Matrix w = gauss::standard_normal(4, 4, rng);
  const Vector b = gauss::standard_normal(4, 1, rng).col(0);
  EXPECT_EQ(dan::rezero_block(x, w, b, 0.0, 0.01), x);
}

TEST(RezeroBlock, ConstantBranch) {
  const Matrix x{{1.0}, {2.0}};
  const Vector b{{0.5, -3.0}};
  const Matrix out = dan::rezero_block(x, Matrix::Zero(2, 2), b, 1.0, 0.01);
  EXPECT_EQ(out, (Matrix{{1.5}, {2.0 - 0.03}}));
}

TEST(RezeroBlock, MatchesComposition) {
  Rng rng(2);
  const Matrix x = gauss::standard_normal(4, 1, rng);
  const Matrix w = gauss::standard_normal(4, 4, rng);
  const Vector b = gauss::standard_normal(4, 1, rng).col(0);
  Matrix pre = w * x;
  pre.colwise() += b;
  const Matrix expected = x + 0.37 * leaky(pre, 0.01);
  EXPECT_LT(max_abs(dan::rezero_block(x, w, b, 0.37, 0.01) - expected), 1e-14);
}

TEST(Params, LayoutShapes) {
  const dan::DanConfig cfg{6, 3, 2, 2, 0.01};
  const dan::DanParams p(cfg);
  const auto& l = p.layout();
  EXPECT_EQ(l.find("analyzer.block0.weight").rows, 8);
  EXPECT_EQ(l.find("analyzer.block1.bias").rows, 8);
  EXPECT_EQ(l.find("analyzer.out.weight").rows, 6);
  EXPECT_EQ(l.find("analyzer.out.weight").cols, 8);
  EXPECT_EQ(l.find("propagater.block1.weight").cols, 6);
  EXPECT_EQ(l.find("procoder.weight").rows, gauss::packed_size(3));
  const Index expected = 2 * (64 + 8 + 1) + 6 * 8 + 6 + 2 * (36 + 6 + 1) + 36 + 6 + 9 * 6 + 9;
  EXPECT_EQ(p.size(), expected);
}

TEST(Params, InitGatesZeroAndDeterministic) {
  const dan::DanConfig cfg{10, 4, 4, 3, 0.01};
  const auto a = dan::init_params(cfg, 42);
  const auto b = dan::init_params(cfg, 42);
  const auto c = dan::init_params(cfg, 43);
  EXPECT_EQ(0, std::memcmp(a.theta().data(), b.theta().data(), sizeof(double) * static_cast<std::size_t>(a.size())));
  EXPECT_NE(a.theta(), c.theta());
  for (const auto& s : a.layout().slices()) {
    if (s.name.ends_with(".gate")) EXPECT_EQ(a.view(s.name)(0, 0), 0.0) << s.name;
  }
  const double bound = 1.0 / std::sqrt(14.0);
  EXPECT_LE(max_abs(a.view("analyzer.block0.weight")), bound);
  EXPECT_LE(max_abs(a.view("analyzer.block0.bias")), bound);
  EXPECT_GT(max_abs(a.view("analyzer.block0.weight")), 0.8 * bound);
  EXPECT_EQ(max_abs(a.view("procoder.weight")), 0.0);
  EXPECT_EQ(max_abs(a.view("procoder.bias")), 0.0);
}

TEST(Params, StackIsIdentityAtInit) {
  dan::DanConfig cfg{5, 2, 2, 4, 0.01};
  auto p = dan::init_params(cfg, 1);
  // Replace the terminal affine with the identity to expose the stack.
  p.view("propagater.out.weight") = Matrix::Identity(5, 5);
  p.view("propagater.out.bias").setZero();
  Rng rng(3);
  const Matrix h = gauss::standard_normal(5, 3, rng);
  EXPECT_EQ(dan::propagater_apply(p, h), h);
}

TEST(Params, MemoryBudgetMatchesEnsemble) {
  const dan::DanConfig cfg;
  EXPECT_EQ(cfg.m, 40 * 20);
  EXPECT_EQ(cfg.depth, 20);
}

TEST(Networks, ZeroParametersGiveZeroMemory) {
  const dan::DanConfig cfg{4, 2, 2, 2, 0.01};
  const dan::DanParams p(cfg);
  Rng rng(4);
  EXPECT_EQ(dan::analyzer_apply(p, gauss::standard_normal(4, 2, rng), gauss::standard_normal(2, 2, rng)),
            Matrix::Zero(4, 2));
  EXPECT_EQ(dan::propagater_apply(p, gauss::standard_normal(4, 2, rng)), Matrix::Zero(4, 2));
  for (const auto& g : dan::procoder_apply(p, gauss::standard_normal(4, 2, rng))) {
    EXPECT_EQ(g.mean, Vector::Zero(2));
    EXPECT_EQ(g.scale, Matrix::Identity(2, 2));
  }
}

TEST(Networks, AnalyzerMatchesComposition) {
  const dan::DanConfig cfg{3, 2, 2, 2, 0.01};
  const auto p = random_params(cfg, 5);
  Rng rng(6);
  const Matrix h = gauss::standard_normal(3, 4, rng);
  const Matrix y = gauss::standard_normal(2, 4, rng);
  const Matrix got = dan::analyzer_apply(p, h, y);
  EXPECT_EQ(got.rows(), 3);
  EXPECT_LT(max_abs(got - manual_analyzer(p, h, y)), 1e-14);
}

TEST(Networks, PropagaterMatchesComposition) {
  const dan::DanConfig cfg{7, 2, 2, 3, 0.01};
  const auto p = random_params(cfg, 7);
  Rng rng(8);
  const Matrix h = gauss::standard_normal(7, 3, rng);
  EXPECT_LT(max_abs(dan::propagater_apply(p, h) - manual_stack(p, "propagater", h)), 1e-14);
}

TEST(Networks, ProcoderMatchesPacking) {
  const dan::DanConfig cfg{6, 3, 3, 1, 0.01};
  const auto p = random_params(cfg, 9);
  Rng rng(10);
  const Matrix h = gauss::standard_normal(6, 2, rng);
  const auto gs = dan::procoder_apply(p, h);
  const Matrix v = manual_procoder(p, h);
  for (Index j = 0; j < 2; ++j) {
    // Independent unpacking of the strict lower triangle, sub-diagonal by sub-diagonal.
    Matrix lam = Matrix::Zero(3, 3);
    for (Index i = 0; i < 3; ++i) lam(i, i) = std::exp(v(3 + i, j));
    lam(1, 0) = v(6, j);
    lam(2, 1) = v(7, j);
    lam(2, 0) = v(8, j);
    EXPECT_LT(max_abs(gs[j].mean - v.col(j).head(3)), 1e-14);
    EXPECT_LT(max_abs(gs[j].covariance() - lam * lam.transpose()), 1e-12);
    EXPECT_GT(gs[j].scale.diagonal().minCoeff(), 0.0);
  }
}

TEST(Cycle, ZeroParametersGiveStandardNormals) {
  const dan::DanConfig cfg{4, 3, 3, 2, 0.01};
  const dan::DanParams p(cfg);
  Rng rng(11);
  const auto r = dan::dan_cycle(p, gauss::standard_normal(4, 2, rng), gauss::standard_normal(3, 2, rng));
  for (const auto* list : {&r.prior, &r.posterior}) {
    for (const auto& g : *list) {
      EXPECT_EQ(g.mean, Vector::Zero(3));
      EXPECT_EQ(g.scale, Matrix::Identity(3, 3));
    }
  }
}

TEST(Cycle, PriorIgnoresObservation) {
  const dan::DanConfig cfg{5, 2, 2, 2, 0.01};
  const auto p = random_params(cfg, 12);
  Rng rng(13);
  const Matrix h = gauss::standard_normal(5, 3, rng);
  const Matrix y = gauss::standard_normal(2, 3, rng);
  const auto a = dan::dan_cycle(p, h, y);
  const auto b = dan::dan_cycle(p, h, y + Matrix::Constant(2, 3, 5.0));
  EXPECT_EQ(a.prior_memory, b.prior_memory);
  for (std::size_t j = 0; j < a.prior.size(); ++j) {
    EXPECT_EQ(a.prior[j].mean, b.prior[j].mean);
    EXPECT_EQ(a.prior[j].scale, b.prior[j].scale);
  }
  EXPECT_NE(a.post_memory, b.post_memory);
}

TEST(Cycle, TwoCyclesDecompose) {
  const dan::DanConfig cfg{5, 2, 2, 2, 0.01};
  const auto p = random_params(cfg, 14);
  Rng rng(15);
  Matrix h = gauss::standard_normal(5, 2, rng);
  for (int t = 0; t < 2; ++t) {
    const Matrix y = gauss::standard_normal(2, 2, rng);
    const auto r = dan::dan_cycle(p, h, y);
    const Matrix hb = dan::propagater_apply(p, h);
    const Matrix ha = dan::analyzer_apply(p, hb, y);
    EXPECT_EQ(r.prior_memory, hb);
    EXPECT_EQ(r.post_memory, ha);
    const auto qb = dan::procoder_apply(p, hb);
    const auto qa = dan::procoder_apply(p, ha);
    for (std::size_t j = 0; j < qb.size(); ++j) {
      EXPECT_EQ(r.prior[j].mean, qb[j].mean);
      EXPECT_EQ(r.posterior[j].scale, qa[j].scale);
    }
    // The hand-composed path agrees to rounding.
    EXPECT_LT(max_abs(ha - manual_analyzer(p, manual_stack(p, "propagater", h), y)), 1e-13);
    h = r.post_memory;
  }
}

TEST(Cycle, ShapeErrors) {
  const dan::DanConfig cfg{5, 2, 2, 1, 0.01};
  const dan::DanParams p(cfg);
  EXPECT_THROW(dan::dan_cycle(p, Matrix::Zero(4, 1), Matrix::Zero(2, 1)), ShapeError);
  EXPECT_THROW(dan::analyzer_apply(p, Matrix::Zero(5, 1), Matrix::Zero(3, 1)), ShapeError);
}

TEST(Config, Validation) {
  EXPECT_THROW(dan::DanParams(dan::DanConfig{0, 2, 2, 1, 0.01}), ConfigError);
  EXPECT_THROW(dan::DanParams(dan::DanConfig{3, 2, 2, 0, 0.01}), ConfigError);
}
