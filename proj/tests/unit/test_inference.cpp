#include <gtest/gtest.h>

#include <cmath>

#include "cosie/chi2.hpp"
#include "cosie/estimation.hpp"
#include "cosie/inference.hpp"
#include "oracles.hpp"

using namespace cosie;

namespace {

double min_eig(const Matrix& S) { return linalg::eig_sym_full(0.5 * (S + S.transpose())).values.minCoeff(); }

GraphSample noiseless(const CosieModel& model) {
  GraphSample g;
  g.directed = model.directed;
  for (Index i = 0; i < model.m(); ++i) g.A.push_back(model.P(i));
  return g;
}

CosieModel binary_model(Index n, Index m) {
  SbmSpec spec;
  spec.directed = true;
  spec.tau.resize(static_cast<std::size_t>(n));
  for (Index s = 0; s < n; ++s) spec.tau[static_cast<std::size_t>(s)] = static_cast<int>(s % 3);
  Matrix B(3, 3);
  B << 1, 0, 1, 0, 1, 0, 0, 1, 1;
  spec.B.assign(static_cast<std::size_t>(m), B);
  return sbm_to_cosie(spec);
}

}  // namespace

TEST(SigmaScore, MatchesNaiveOracles) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const CosieModel model = oracle::small_model(12 + 2 * static_cast<Index>(seed), 3, 2, true, 50 + seed);
    for (Index i = 0; i < 2; ++i) {
      const Matrix W = oracle::bernoulli_variance(model.P(i));
      const Matrix S = sigma_score(model, i);
      EXPECT_LE(linalg::max_abs(S - oracle::sigma(model.U, model.V, W)), 1e-10);
      EXPECT_LE(linalg::max_abs(S - oracle::sigma_loops(model.U, model.V, W)), 1e-10);
      EXPECT_GE(min_eig(S), -1e-10);
    }
  }
}

TEST(SigmaScore, ConstantHalfGivesQuarterIdentity) {
  const Index n = 16;
  CosieModel model;
  model.U = oracle::random_orthonormal(n, 2, 1);
  model.V = oracle::random_orthonormal(n, 2, 2);
  const Matrix S = score_covariance(model.U, model.V, Matrix::Constant(n, n, 0.25));
  EXPECT_LE(linalg::max_abs(S - 0.25 * Matrix::Identity(4, 4)), 1e-12);
}

TEST(SigmaScore, ScalarCase) {
  const CosieModel model = oracle::small_model(15, 1, 1, true, 3);
  const Matrix P = model.P(0);
  double ref = 0.0;
  for (Index s = 0; s < 15; ++s)
    for (Index t = 0; t < 15; ++t)
      ref += model.U(s, 0) * model.U(s, 0) * model.V(t, 0) * model.V(t, 0) * P(s, t) * (1 - P(s, t));
  EXPECT_NEAR(sigma_score(model, 0)(0, 0), ref, 1e-14);
}

TEST(SigmaScore, PluginOnNoiselessSampleEqualsOracle) {
  const CosieModel model = oracle::small_model(40, 3, 2, true, 4);
  SubspaceEstimate est = estimate_cosie(noiseless(model), {3, 3}, 3);
  align_to(est, model);
  const Matrix Wstar = linalg::kron(*est.W_V, *est.W_U);
  for (Index i = 0; i < 2; ++i)
    EXPECT_LE(linalg::max_abs(Wstar * sigma_score(model, i) * Wstar.transpose() - sigma_score_plugin(est, i)), 1e-8);
}

TEST(MuBias, MatchesNaiveOracle) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const CosieModel model = oracle::small_model(20, 2, 2, true, 60 + seed);
    for (Index i = 0; i < 2; ++i) EXPECT_LE((mu_bias(model, i) - oracle::mu(model, i)).cwiseAbs().maxCoeff(), 1e-10);
  }
  const CosieModel three = oracle::small_model(18, 3, 3, true, 70);
  for (Index i = 0; i < 3; ++i) EXPECT_LE((mu_bias(three, i) - oracle::mu(three, i)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(MuBias, ZeroForBinaryProbabilities) {
  const CosieModel model = binary_model(30, 2);
  EXPECT_LE(mu_bias(model, 0).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(MuBias, IdenticalBlocksScaleAsOneOverM) {
  const CosieModel one = oracle::small_model(20, 3, 1, true, 80);
  const Vector mu1 = mu_bias(one, 0);
  for (Index m : {2, 3, 5}) {
    CosieModel many = one;
    many.R.assign(static_cast<std::size_t>(m), one.R[0]);
    for (Index i = 0; i < m; ++i) EXPECT_LE((mu_bias(many, i) - mu1 / static_cast<double>(m)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(UpsilonRow, MatchesNaiveOracle) {
  const CosieModel model = oracle::small_model(20, 3, 3, true, 90);
  for (Index k : {0, 7, 19}) {
    const Matrix Y = upsilon_row(model, k);
    EXPECT_LE(linalg::max_abs(Y - oracle::upsilon(model, k)), 1e-10);
    EXPECT_LE(linalg::max_abs(upsilon_row(model, k, Side::V) - oracle::upsilon_v(model, k)), 1e-10);
    EXPECT_GE(min_eig(Y), -1e-10);
  }
}

TEST(UpsilonRow, ZeroVarianceAndLinearityInM) {
  EXPECT_LE(linalg::max_abs(upsilon_row(binary_model(30, 2), 4)), 1e-15);
  const CosieModel one = oracle::small_model(20, 2, 1, true, 91);
  CosieModel four = one;
  four.R.assign(4, one.R[0]);
  EXPECT_LE(linalg::max_abs(upsilon_row(four, 3) - upsilon_row(one, 3) / 4.0), 1e-14);
}

TEST(UpsilonRow, SharedVariantReducesToCommonCase) {
  const CosieModel model = oracle::small_model(20, 3, 2, true, 92);
  std::vector<LayerFactors> layers;
  for (const Matrix& R : model.R) layers.push_back({model.U, R, model.V});
  for (Index k : {1, 11})
    EXPECT_LE(linalg::max_abs(upsilon_row_shared(model.U, layers, k) - upsilon_row(model, k)), 1e-12);
}

TEST(Undirected, MatchesExplicitDuplicationOracle) {
  const CosieModel model = oracle::small_model(10, 2, 2, false, 93);
  for (Index i = 0; i < 2; ++i) {
    const UndirectedScoreQuantities q = undirected_score_quantities(model, i);
    const Matrix W = oracle::bernoulli_variance(model.P(i));
    EXPECT_LE(linalg::max_abs(q.upsilon - oracle::undirected_upsilon(model.U, W)), 1e-10);
    const Matrix L = linalg::elimination(2);
    EXPECT_LE(linalg::max_abs(q.vech_sigma - L * oracle::sigma(model.U, model.U, W) * L.transpose()), 1e-10);
    EXPECT_LE((q.vech_mu - L * oracle::mu(model, i)).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_EQ(q.vech_upsilon.rows(), 3);
    EXPECT_GE(min_eig(q.upsilon), -1e-10);
  }
}

TEST(Undirected, ScalarCaseCoincidesWithDirected) {
  const CosieModel model = oracle::small_model(12, 1, 2, false, 94);
  const UndirectedScoreQuantities q = undirected_score_quantities(model, 0);
  EXPECT_LE(linalg::max_abs(q.vech_sigma - sigma_score(model, 0)), 1e-15);
  EXPECT_LE((q.vech_mu - mu_bias(model, 0)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Undirected, SampledCovarianceMatchesUpsilon) {
  const CosieModel model = oracle::small_model(12, 2, 1, false, 95);
  const Matrix U = model.U;
  std::vector<Vector> xs;
  const int reps = 20000;
  for (int r = 0; r < reps; ++r) xs.push_back(linalg::vec(U.transpose() * sample_cosie(model, Stream(r)).A[0] * U));
  Vector mean = Vector::Zero(4);
  for (const Vector& x : xs) mean += x / reps;
  Matrix S = Matrix::Zero(4, 4);
  for (const Vector& x : xs) S += (x - mean) * (x - mean).transpose() / (reps - 1);
  const Matrix Y = undirected_score_quantities(model, 0).upsilon;
  EXPECT_LE((S - Y).norm() / Y.norm(), 0.05);
}

TEST(TwoSample, IdenticalGraphsGiveZero) {
  const CosieModel model = oracle::small_model(60, 3, 1, true, 100);
  GraphSample g = sample_cosie(model, Stream(1));
  g.A.push_back(g.A[0]);
  const SubspaceEstimate est = estimate_cosie(g, {3, 3}, 3);
  const TestReport r = two_sample_test(est, 0, 1);
  EXPECT_NEAR(r.statistic, 0.0, 1e-10);
  EXPECT_NEAR(r.p_value, 1.0, 1e-10);
  EXPECT_EQ(r.df, 9);
  EXPECT_NEAR(multi_sample_test(est).statistic, 0.0, 1e-10);
}

TEST(TwoSample, SymmetryAndPValue) {
  const CosieModel model = oracle::small_model(80, 3, 3, true, 101);
  const SubspaceEstimate est = estimate_cosie(sample_cosie(model, Stream(2)), {3, 3, 3}, 3);
  const TestReport a = two_sample_test(est, 0, 2), b = two_sample_test(est, 2, 0);
  EXPECT_NEAR(a.statistic, b.statistic, 1e-10 * (1 + a.statistic));
  EXPECT_EQ(two_sample_test(est, 1, 1).statistic, 0.0);
  EXPECT_NEAR(a.p_value, 1.0 - chi2_cdf(a.statistic, 9.0), 1e-10);
  EXPECT_GT(a.condition, 1.0);
}

TEST(TwoSample, MatchesDirectEvaluation) {
  const CosieModel model = oracle::small_model(50, 2, 2, true, 102);
  const SubspaceEstimate est = estimate_cosie(sample_cosie(model, Stream(3)), {2, 2}, 2);
  const Vector x = linalg::vec(est.Rhat[0] - est.Rhat[1]);
  const Matrix S = oracle::sigma(est.Uhat, est.Vhat, oracle::bernoulli_variance(est.Phat(0))) +
                   oracle::sigma(est.Uhat, est.Vhat, oracle::bernoulli_variance(est.Phat(1)));
  EXPECT_NEAR(two_sample_test(est, 0, 1).statistic, x.dot(S.inverse() * x), 1e-8);
}

TEST(TwoSample, GaugeInvariance) {
  for (bool directed : {true, false}) {
    const CosieModel model = oracle::small_model(70, 3, 3, directed, 103);
    const SubspaceEstimate est = estimate_cosie(sample_cosie(model, Stream(4)), {3, 3, 3}, 3);
    const Matrix O = oracle::random_orthogonal(3, 5);
    const Matrix O2 = directed ? oracle::random_orthogonal(3, 6) : O;
    SubspaceEstimate rot = est;
    rot.Uhat = est.Uhat * O;
    rot.Vhat = est.Vhat * O2;
    for (auto& R : rot.Rhat) R = (O.transpose() * R * O2).eval();
    for (Index i = 0; i < 3; ++i)
      for (Index j = i + 1; j < 3; ++j) {
        const TestReport a = two_sample_test(est, i, j), b = two_sample_test(rot, i, j);
        EXPECT_NEAR(a.statistic, b.statistic, 1e-8 * (1 + a.statistic));
        EXPECT_NEAR(a.p_value, b.p_value, 1e-8);
      }
    EXPECT_NEAR(multi_sample_test(est).statistic, multi_sample_test(rot).statistic, 1e-8);
  }
}

TEST(MultiSample, TwoLayersEqualsPairStatistic) {
  const CosieModel model = oracle::small_model(60, 3, 2, true, 104);
  const SubspaceEstimate est = estimate_cosie(sample_cosie(model, Stream(5)), {3, 3}, 3);
  const TestReport all = multi_sample_test(est);
  // direct evaluation with the averaged covariance
  const Vector x0 = linalg::vec(est.Rhat[0]), x1 = linalg::vec(est.Rhat[1]);
  const Vector xbar = (x0 + x1) / 2.0;
  const Matrix Sbar = (sigma_score_plugin(est, 0) + sigma_score_plugin(est, 1)) / 2.0;
  const Matrix Si = Sbar.inverse();
  const double direct = (x0 - xbar).dot(Si * (x0 - xbar)) + (x1 - xbar).dot(Si * (x1 - xbar));
  EXPECT_NEAR(all.statistic, direct, 1e-8 * (1 + direct));
  EXPECT_NEAR(all.statistic, two_sample_test(est, 0, 1).statistic, 1e-8 * (1 + direct));
  EXPECT_EQ(all.df, 9);
}

TEST(Families, BonferroniLevels) {
  const CosieModel model = oracle::small_model(60, 2, 4, true, 105);
  const SubspaceEstimate est = estimate_cosie(sample_cosie(model, Stream(6)), {2, 2, 2, 2}, 2);
  const auto pairs = pairwise_tests(est, 0.06);
  ASSERT_EQ(pairs.size(), 6u);
  for (const TestReport& r : pairs) {
    EXPECT_NEAR(r.alpha, 0.01, 1e-15);
    EXPECT_EQ(r.reject, r.p_value < 0.01);
  }
  const auto scan = changepoint_scan(est, 0.06);
  ASSERT_EQ(scan.size(), 3u);
  for (const TestReport& r : scan) {
    EXPECT_NEAR(r.alpha, 0.02, 1e-15);
    EXPECT_EQ(r.indices[1], r.indices[0] + 1);
  }
  EXPECT_EQ(multi_sample_test(est).df, 3 * 4);
  EXPECT_THROW(pairwise_tests(est, 1.5), Error);
}

TEST(TwoSample, UndirectedUsesVechDimension) {
  const CosieModel model = oracle::small_model(70, 3, 2, false, 106);
  const SubspaceEstimate est = estimate_cosie(sample_cosie(model, Stream(7)), {3, 3}, 3);
  EXPECT_EQ(two_sample_test(est, 0, 1).df, 6);
  EXPECT_EQ(linalg::vech_size(2), 3);
}

TEST(TwoSample, SingularCovarianceIsAnErrorUnlessRidged) {
  const CosieModel model = binary_model(30, 2);
  const SubspaceEstimate est = estimate_cosie(noiseless(model), {3, 3}, 3);
  try {
    two_sample_test(est, 0, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::singular);
  }
  Matrix S = Matrix::Identity(2, 2);
  S(1, 1) = 0.0;
  EXPECT_THROW(detail::quadratic_form(S, Vector::Ones(2), {}, nullptr), Error);
  S(1, 1) = 1e-20;
  TestOptions ridge;
  ridge.ridge = true;
  EXPECT_NO_THROW(detail::quadratic_form(S, Vector::Ones(2), ridge, nullptr));
}

TEST(Noncentrality, ZeroUnderNullAndQuadraticForm) {
  CosieModel model = oracle::small_model(30, 2, 2, true, 107);
  model.R[1] = model.R[0];
  EXPECT_NEAR(noncentrality(model, 0, 1), 0.0, 1e-14);
  model = oracle::small_model(30, 2, 2, true, 108);
  const Vector x = linalg::vec(model.R[0] - model.R[1]);
  const Matrix S = sigma_score(model, 0) + sigma_score(model, 1);
  EXPECT_NEAR(noncentrality(model, 0, 1), x.dot(S.inverse() * x), 1e-8 * x.dot(S.inverse() * x));
}

TEST(PluginConsistency, DeskScaleDesign) {
  Stream rng(20240611);
  SbmSpec spec;
  spec.tau = random_memberships(800, 3, rng);
  for (int i = 0; i < 2; ++i) spec.B.push_back(harness::admissible_uniform_B(3, rng, 0.1, 0.0, false));
  const CosieModel model = sbm_to_cosie(spec);
  SubspaceEstimate est = estimate_cosie(sample_cosie(model, Stream(1)), {3, 3}, 3);
  align_to(est, model);
  const Matrix Wstar = linalg::kron(*est.W_V, *est.W_U);
  const Matrix ref = Wstar * sigma_score(model, 0) * Wstar.transpose();
  EXPECT_LE((ref - sigma_score_plugin(est, 0)).norm() / ref.norm(), 0.1);
}
