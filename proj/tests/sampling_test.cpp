// Copyright 2026 The DPS Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "dps/sampling.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

namespace dps {
namespace {

LogitsMatrix logits_from(std::initializer_list<std::initializer_list<double>> rows) {
  LogitsMatrix l;
  l.phi.resize(static_cast<Eigen::Index>(rows.size()),
               static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (double v : row) l.phi(r, c++) = v;
    ++r;
  }
  return l;
}

GumbelNoise zero_noise(Eigen::Index rows, Eigen::Index cols) {
  GumbelNoise g;
  g.e = Eigen::MatrixXd::Zero(rows, cols);
  return g;
}

// --- init_logits -----------------------------------------------------------

TEST(InitLogitsTest, ZeroOffsetLeavesOnlyJitter) {
  // With noise disabled, the polynomial is exactly 0 where d = 0 and matches
  // the closed form elsewhere.
  RandomStream rng(1, "init");
  const LogitsMatrix l = init_logits(4, 16, rng, 0.0);
  // d = (n+1) - 4(m+1) = 0 at n = 4m + 3.
  for (int m = 0; m < 4; ++m) EXPECT_DOUBLE_EQ(l.phi(m, 4 * m + 3), 0.0);
  // d = 8 away from the ridge: -2.73e-7*8^4 - 2.73e-3*8^2.
  const double expect_d8 = -2.73e-7 * 4096.0 - 2.73e-3 * 64.0;
  EXPECT_NEAR(expect_d8, -0.17584, 5e-6);
  EXPECT_NEAR(l.phi(0, 11), expect_d8, 1e-15);  // n=11: d = 12 - 4 = 8
}

TEST(InitLogitsTest, RowMaximumSitsOnTheRidge) {
  RandomStream rng(1, "init");
  const LogitsMatrix l = init_logits(32, 128, rng, 0.0);
  const double ratio = 128.0 / 32.0;
  for (int m = 0; m < 32; ++m) {
    Eigen::Index argmax;
    l.phi.row(m).maxCoeff(&argmax);
    const double expected_1based = std::round(ratio * (m + 1));
    EXPECT_EQ(static_cast<double>(argmax + 1), expected_1based) << "row " << m;
  }
}

TEST(InitLogitsTest, JitterHasRequestedSpread) {
  RandomStream rng(3, "init");
  const LogitsMatrix noisy = init_logits(32, 128, rng, 0.1);
  RandomStream rng2(3, "init");
  const LogitsMatrix clean = init_logits(32, 128, rng2, 0.0);
  const Eigen::ArrayXXd jitter = noisy.phi.array() - clean.phi.array();
  const double sd = std::sqrt(jitter.square().mean());
  EXPECT_NEAR(sd, 0.1, 0.01);  // 4096 samples of N(0, 0.1^2)
  EXPECT_THROW(init_logits(8, 4, rng), config_error);
}

// --- gumbel ----------------------------------------------------------------

TEST(GumbelTest, QuantileTransformPinnedValues) {
  EXPECT_NEAR(gumbel_from_uniform(0.5), 0.36651292058166435, 1e-15);
  EXPECT_NEAR(gumbel_from_uniform(std::exp(-1.0)), 0.0, 1e-15);
}

TEST(GumbelTest, SampleMeanIsEulerMascheroni) {
  RandomStream rng(17, "gumbel");
  const int n = 1000000;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += gumbel_from_uniform(rng.uniform_open01());
  EXPECT_NEAR(acc / n, 0.5772, 5e-3);
}

TEST(GumbelTest, NoiseMatrixIsFiniteAndShaped) {
  RandomStream rng(4, "gumbel");
  const GumbelNoise g = sample_gumbel(rng, 3, 7);
  EXPECT_EQ(g.e.rows(), 3);
  EXPECT_EQ(g.e.cols(), 7);
  EXPECT_TRUE(g.e.allFinite());
  EXPECT_THROW(sample_gumbel(rng, 0, 7), config_error);
}

// --- draw_pattern ----------------------------------------------------------

TEST(DrawPatternTest, DominatingLogitAlwaysWins) {
  LogitsMatrix l = logits_from({{0, 0, 50, 0, 0, 0}});
  RandomStream rng(9, "gumbel");
  for (int rep = 0; rep < 100; ++rep) {
    const auto [pat, mask] = draw_pattern(l, sample_gumbel(rng, 1, 6));
    EXPECT_EQ(pat.indices[0], 2);
  }
}

TEST(DrawPatternTest, UniformLogitsGiveUniformMarginal) {
  const LogitsMatrix l = logits_from({{1, 1, 1, 1, 1, 1, 1, 1}});
  RandomStream rng(11, "gumbel");
  Eigen::VectorXd hits = Eigen::VectorXd::Zero(8);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i)
    hits(draw_pattern(l, sample_gumbel(rng, 1, 8)).first.indices[0]) += 1.0;
  double tv = 0.0;
  for (int i = 0; i < 8; ++i) tv += std::abs(hits(i) / draws - 0.125);
  EXPECT_LT(0.5 * tv, 0.01);
}

TEST(DrawPatternTest, GumbelMaxMatchesSoftmaxFrequencies) {
  // Fixed uneven logits, M=1: empirical draw frequencies vs softmax.
  RandomStream init(123, "init");
  LogitsMatrix l;
  l.phi.resize(1, 8);
  for (int i = 0; i < 8; ++i) l.phi(0, i) = init.normal();
  const Eigen::MatrixXd pi = row_distributions(l);
  RandomStream rng(123, "gumbel");
  Eigen::VectorXd hits = Eigen::VectorXd::Zero(8);
  const int draws = 1000000;
  for (int i = 0; i < draws; ++i)
    hits(draw_pattern(l, sample_gumbel(rng, 1, 8)).first.indices[0]) += 1.0;
  double tv = 0.0;
  for (int i = 0; i < 8; ++i) tv += std::abs(hits(i) / draws - pi(0, i));
  EXPECT_LT(0.5 * tv, 0.01);
}

TEST(DrawPatternTest, FullDrawIsPermutation) {
  RandomStream init(5, "init");
  RandomStream rng(5, "gumbel");
  const LogitsMatrix l = init_logits(8, 8, init);
  const auto [pat, mask] = draw_pattern(l, sample_gumbel(rng, 8, 8));
  std::set<int> seen(pat.indices.begin(), pat.indices.end());
  EXPECT_EQ(seen.size(), 8u);
  EXPECT_EQ(*seen.begin(), 0);
  EXPECT_EQ(*seen.rbegin(), 7);
}

TEST(DrawPatternTest, NoReplacementOverManyDraws) {
  RandomStream init(6, "init");
  const LogitsMatrix l = init_logits(8, 32, init);
  RandomStream rng(6, "gumbel");
  for (int rep = 0; rep < 100000; ++rep) {
    const auto pat = draw_pattern(l, sample_gumbel(rng, 8, 32)).first;
    std::set<int> seen(pat.indices.begin(), pat.indices.end());
    ASSERT_EQ(seen.size(), pat.indices.size()) << "duplicate at rep " << rep;
  }
}

TEST(DrawPatternTest, MaskAccumulatesOneEntryPerRow) {
  RandomStream init(7, "init");
  RandomStream rng(7, "gumbel");
  const LogitsMatrix l = init_logits(5, 12, init);
  const auto [pat, mask] = draw_pattern(l, sample_gumbel(rng, 5, 12));
  ASSERT_EQ(mask.w.rows(), 6);
  for (int m = 0; m <= 5; ++m) {
    int masked = 0;
    for (int n = 0; n < 12; ++n) {
      EXPECT_TRUE(mask.w(m, n) == 0.0 || mask.w(m, n) == kMaskNeg);
      if (mask.w(m, n) == kMaskNeg) ++masked;
    }
    EXPECT_EQ(masked, m);
  }
  // Masked positions are never re-selected.
  for (int m = 0; m < 5; ++m)
    for (int j = 0; j < m; ++j) EXPECT_NE(pat.indices[static_cast<size_t>(m)],
                                          pat.indices[static_cast<size_t>(j)]);
  EXPECT_THROW(draw_pattern(l, zero_noise(4, 12)), config_error);
}

// --- apply_pattern ---------------------------------------------------------

TEST(ApplyPatternTest, IdentityAndSelection) {
  Eigen::MatrixXcd x(1, 4);
  x << std::complex<double>(1, 0), std::complex<double>(2, 1),
      std::complex<double>(3, 0), std::complex<double>(4, -1);
  SamplingPattern full{{0, 1, 2, 3}, 4};
  EXPECT_TRUE(apply_pattern(full, x).cwiseEqual(x).all());
  SamplingPattern pick{{0, 2}, 4};
  const Eigen::MatrixXcd y = apply_pattern(pick, x);
  ASSERT_EQ(y.cols(), 2);
  EXPECT_EQ(y(0, 0), x(0, 0));
  EXPECT_EQ(y(0, 1), x(0, 2));
}

TEST(ApplyPatternTest, EnergyGradientMatchesFiniteDifferences) {
  // d||y||^2 / dx = 2x on sampled indices, 0 elsewhere, per real channel.
  const SamplingPattern pat{{1, 3}, 5};
  RandomStream rng(8);
  Eigen::VectorXcd x(5);
  for (int i = 0; i < 5; ++i) x(i) = {rng.normal(), rng.normal()};
  auto energy = [&](const Eigen::VectorXcd& v) {
    return apply_pattern(pat, Eigen::VectorXcd(v)).squaredNorm();
  };
  const double eps = 1e-6;
  for (int i = 0; i < 5; ++i) {
    for (int part = 0; part < 2; ++part) {
      Eigen::VectorXcd hi = x, lo = x;
      const std::complex<double> delta = part == 0 ? std::complex<double>(eps, 0)
                                                   : std::complex<double>(0, eps);
      hi(i) += delta;
      lo(i) -= delta;
      const double fd = (energy(hi) - energy(lo)) / (2.0 * eps);
      const bool sampled = i == 1 || i == 3;
      const double analytic =
          sampled ? 2.0 * (part == 0 ? x(i).real() : x(i).imag()) : 0.0;
      EXPECT_NEAR(fd, analytic, 1e-6) << "i=" << i << " part=" << part;
    }
  }
}

TEST(ApplyPatternTest, ShapeMismatchThrows) {
  const SamplingPattern pat{{0, 1}, 4};
  const Eigen::MatrixXcd wrong_width = Eigen::MatrixXcd::Zero(2, 5);
  EXPECT_THROW(apply_pattern(pat, wrong_width), config_error);
  SamplingPattern bad{{0, 9}, 4};
  const Eigen::MatrixXcd right_width = Eigen::MatrixXcd::Zero(2, 4);
  EXPECT_THROW(apply_pattern(bad, right_width), internal_error);
}

// --- soft_rows --------------------------------------------------------------

TEST(SoftRowsTest, SymmetryAndSharpLimit) {
  const LogitsMatrix two = logits_from({{1.0, 1.0}});
  const MaskState mask{Eigen::MatrixXd::Zero(2, 2)};
  const Eigen::MatrixXd p = soft_rows(two, zero_noise(1, 2), mask, 1.0);
  EXPECT_DOUBLE_EQ(p(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(p(0, 1), 0.5);

  const LogitsMatrix distinct = logits_from({{0.3, 0.2, 0.1, 0.0}});
  const MaskState mask4{Eigen::MatrixXd::Zero(2, 4)};
  const Eigen::MatrixXd sharp = soft_rows(distinct, zero_noise(1, 4), mask4, 0.01);
  EXPECT_GT(sharp(0, 0), 0.999);
  EXPECT_THROW(soft_rows(distinct, zero_noise(1, 4), mask4, 0.0), config_error);
}

TEST(SoftRowsTest, MaskedEntriesGetZeroProbability) {
  RandomStream init(10, "init");
  RandomStream rng(10, "gumbel");
  const LogitsMatrix l = init_logits(4, 9, init);
  const auto [pat, mask] = draw_pattern(l, sample_gumbel(rng, 4, 9));
  const Eigen::MatrixXd p = soft_rows(l, sample_gumbel(rng, 4, 9), mask, 2.0);
  for (int m = 0; m < 4; ++m) {
    double sum = 0.0;
    for (int n = 0; n < 9; ++n) {
      if (mask.w(m, n) == kMaskNeg) EXPECT_LT(p(m, n), 1e-30);
      sum += p(m, n);
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

// --- st_grad_logits ---------------------------------------------------------

TEST(StGradTest, TwoClassJacobian) {
  // J = (1/tau)(diag(p) - p p^T) at p = (0.5, 0.5), tau = 1: rows of +-0.25.
  Eigen::MatrixXd soft(1, 2);
  soft << 0.5, 0.5;
  const MaskState mask{Eigen::MatrixXd::Zero(2, 2)};
  Eigen::MatrixXd e1(1, 2);
  e1 << 1.0, 0.0;
  const Eigen::MatrixXd g1 = st_grad_logits(e1, soft, 1.0, mask);
  EXPECT_NEAR(g1(0, 0), 0.25, 1e-15);
  EXPECT_NEAR(g1(0, 1), -0.25, 1e-15);
  Eigen::MatrixXd e2(1, 2);
  e2 << 0.0, 1.0;
  const Eigen::MatrixXd g2 = st_grad_logits(e2, soft, 1.0, mask);
  EXPECT_NEAR(g2(0, 0), -0.25, 1e-15);
  EXPECT_NEAR(g2(0, 1), 0.25, 1e-15);
}

TEST(StGradTest, ShiftInvarianceRowsSumToZero) {
  RandomStream init(12, "init");
  RandomStream rng(12, "gumbel");
  const LogitsMatrix l = init_logits(3, 8, init);
  const GumbelNoise noise = sample_gumbel(rng, 3, 8);
  const auto [pat, mask] = draw_pattern(l, noise);
  const Eigen::MatrixXd soft = soft_rows(l, noise, mask, 1.7);
  Eigen::MatrixXd up(3, 8);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 8; ++c) up(r, c) = rng.normal();
  const Eigen::MatrixXd g = st_grad_logits(up, soft, 1.7, mask);
  for (int r = 0; r < 3; ++r) EXPECT_NEAR(g.row(r).sum(), 0.0, 1e-12);
  // Constant upstream = zero gradient (J annihilates constants).
  const Eigen::MatrixXd gc =
      st_grad_logits(Eigen::MatrixXd::Constant(3, 8, 2.5), soft, 1.7, mask);
  EXPECT_LT(gc.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(StGradTest, JacobianIsSymmetricPsd) {
  // Explicit J for one unmasked row: (1/tau)(diag(p) - p p^T).
  RandomStream init(13, "init");
  LogitsMatrix l;
  l.phi.resize(1, 6);
  for (int i = 0; i < 6; ++i) l.phi(0, i) = init.normal();
  const MaskState mask{Eigen::MatrixXd::Zero(2, 6)};
  const double tau = 0.8;
  const Eigen::MatrixXd soft = soft_rows(l, zero_noise(1, 6), mask, tau);
  Eigen::MatrixXd jac(6, 6);
  for (int i = 0; i < 6; ++i) {
    Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(1, 6);
    basis(0, i) = 1.0;
    jac.row(i) = st_grad_logits(basis, soft, tau, mask).row(0);
  }
  EXPECT_LT((jac - jac.transpose()).cwiseAbs().maxCoeff(), 1e-14);
  const Eigen::VectorXd eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(jac).eigenvalues();
  EXPECT_GT(eig.minCoeff(), -1e-14);
}

TEST(StGradTest, MatchesFiniteDifferencesAtUnitTau) {
  RandomStream init(14, "init");
  RandomStream rng(14, "gumbel");
  LogitsMatrix l;
  l.phi.resize(1, 6);
  for (int i = 0; i < 6; ++i) l.phi(0, i) = init.normal();
  const GumbelNoise noise = sample_gumbel(rng, 1, 6);
  const auto mask = draw_pattern(l, noise).second;
  Eigen::MatrixXd up(1, 6);
  for (int i = 0; i < 6; ++i) up(0, i) = rng.normal();
  const Eigen::MatrixXd analytic =
      st_grad_logits(up, soft_rows(l, noise, mask, 1.0), 1.0, mask);
  const double eps = 1e-6;
  double worst = 0.0;
  for (int i = 0; i < 6; ++i) {
    LogitsMatrix probe = l;
    probe.phi(0, i) += eps;
    const double hi = (up.array() * soft_rows(probe, noise, mask, 1.0).array()).sum();
    probe.phi(0, i) -= 2.0 * eps;
    const double lo = (up.array() * soft_rows(probe, noise, mask, 1.0).array()).sum();
    const double fd = (hi - lo) / (2.0 * eps);
    worst = std::max(worst, std::abs(fd - analytic(0, i)));
  }
  const double scale = std::max(analytic.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(worst / scale, 1e-6);
}

// --- entropy_penalty --------------------------------------------------------

TEST(EntropyTest, OneHotAndUniformClosedForms) {
  LogitsMatrix sharp;
  sharp.phi = Eigen::MatrixXd::Zero(2, 8);
  sharp.phi(0, 3) = 50.0;
  sharp.phi(1, 5) = 50.0;
  EXPECT_LT(entropy_penalty(sharp).first, 1e-6);

  LogitsMatrix flat;
  flat.phi = Eigen::MatrixXd::Constant(32, 128, 0.7);
  EXPECT_NEAR(entropy_penalty(flat).first, 32.0 * std::log(128.0), 1e-9);
  EXPECT_NEAR(32.0 * std::log(128.0), 155.26496844542774, 1e-10);
}

TEST(EntropyTest, GradientMatchesFiniteDifferences) {
  RandomStream rng(15, "init");
  LogitsMatrix l;
  l.phi.resize(3, 8);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 8; ++c) l.phi(r, c) = rng.normal();
  const Eigen::MatrixXd analytic = entropy_penalty(l).second;
  const double eps = 1e-6;
  double worst = 0.0;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 8; ++c) {
      LogitsMatrix probe = l;
      probe.phi(r, c) += eps;
      const double hi = entropy_penalty(probe).first;
      probe.phi(r, c) -= 2.0 * eps;
      const double lo = entropy_penalty(probe).first;
      worst = std::max(worst, std::abs((hi - lo) / (2.0 * eps) - analytic(r, c)));
    }
  const double scale = std::max(analytic.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(worst / scale, 1e-6);
  // Gradient rows sum to zero: entropy is shift-invariant per row.
  for (int r = 0; r < 3; ++r) EXPECT_NEAR(analytic.row(r).sum(), 0.0, 1e-12);
}

// --- map_pattern / fixed patterns -------------------------------------------

TEST(MapPatternTest, GreedyWithMaskingAndDeterminism) {
  // Distinct argmaxes: map == rowwise argmax.
  const LogitsMatrix a = logits_from({{9, 0, 0, 0}, {0, 0, 9, 0}});
  EXPECT_EQ(map_pattern(a).indices, (std::vector<int>{0, 2}));
  // Shared argmax: second row takes its runner-up.
  const LogitsMatrix b = logits_from({{9, 5, 0, 0}, {9, 0, 7, 0}});
  EXPECT_EQ(map_pattern(b).indices, (std::vector<int>{0, 2}));
  EXPECT_EQ(map_pattern(b).indices, map_pattern(b).indices);
  // Exact ties resolve to the lowest index.
  const LogitsMatrix c = logits_from({{1, 1, 1, 1}});
  EXPECT_EQ(map_pattern(c).indices, (std::vector<int>{0}));
}

TEST(UniformPatternTest, StridesAndErrors) {
  EXPECT_EQ(uniform_pattern(8, 2).indices, (std::vector<int>{0, 4}));
  const SamplingPattern p = uniform_pattern(128, 32);
  for (int i = 0; i < 32; ++i) EXPECT_EQ(p.indices[static_cast<size_t>(i)], 4 * i);
  const SamplingPattern id = uniform_pattern(5, 5);
  EXPECT_EQ(id.indices, (std::vector<int>{0, 1, 2, 3, 4}));
  EXPECT_THROW(uniform_pattern(10, 4), config_error);
}

TEST(RandomPatternTest, DistinctDeterministicUniform) {
  RandomStream rng(33, "init");
  for (int rep = 0; rep < 10000; ++rep) {
    const SamplingPattern p = random_pattern(16, 4, rng);
    std::set<int> seen(p.indices.begin(), p.indices.end());
    ASSERT_EQ(seen.size(), 4u);
  }
  RandomStream a(5, "init"), b(5, "init");
  EXPECT_EQ(random_pattern(16, 4, a).indices, random_pattern(16, 4, b).indices);

  RandomStream rng2(77, "init");
  Eigen::VectorXd hits = Eigen::VectorXd::Zero(16);
  const int draws = 100000;
  for (int rep = 0; rep < draws; ++rep)
    for (int idx : random_pattern(16, 4, rng2).indices) hits(idx) += 1.0;
  const double expect = 4.0 / 16.0;
  const double se = std::sqrt(expect * (1.0 - expect) / draws);
  for (int i = 0; i < 16; ++i) EXPECT_NEAR(hits(i) / draws, expect, 3.0 * se);
}

// --- straight-through consistency -------------------------------------------

TEST(StraightThroughTest, SoftRowsApproachHardOneHotAsTauDrops) {
  RandomStream init(21, "init");
  RandomStream rng(21, "gumbel");
  const LogitsMatrix l = init_logits(6, 24, init);
  double prev = std::numeric_limits<double>::infinity();
  const GumbelNoise noise = sample_gumbel(rng, 6, 24);
  const auto [pat, mask] = draw_pattern(l, noise);
  const Eigen::MatrixXd hard = pat.onehot();
  for (double tau : {5.0, 2.0, 1.0, 0.5}) {
    const double gap = (soft_rows(l, noise, mask, tau) - hard).cwiseAbs().sum() / 6.0;
    EXPECT_LE(gap, prev + 1e-12) << "tau " << tau;
    prev = gap;
  }
}

TEST(RowDistributionTest, RowsSumToOne) {
  RandomStream init(2, "init");
  const LogitsMatrix l = init_logits(5, 40, init);
  const Eigen::MatrixXd pi = row_distributions(l);
  for (int m = 0; m < 5; ++m) {
    EXPECT_NEAR(pi.row(m).sum(), 1.0, 1e-9);
    EXPECT_GE(pi.row(m).minCoeff(), 0.0);
  }
}

}  // namespace
}  // namespace dps
