#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cosie/estimation.hpp"
#include "oracles.hpp"

using namespace cosie;

namespace {

GraphSample noiseless(const CosieModel& model) {
  GraphSample g;
  g.directed = model.directed;
  for (Index i = 0; i < model.m(); ++i) g.A.push_back(model.P(i));
  return g;
}

}  // namespace

TEST(EstimateCosie, NoiselessRecoveryDirected) {
  const CosieModel model = oracle::small_model(60, 3, 3, true, 1);
  SubspaceEstimate est = estimate_cosie(noiseless(model), {3, 3, 3}, 3);
  EXPECT_LE(linalg::sin_theta(est.Uhat, model.U), 1e-8);
  EXPECT_LE(linalg::sin_theta(est.Vhat, model.V), 1e-8);
  align_to(est, model);
  for (Index i = 0; i < 3; ++i) EXPECT_LE(linalg::max_abs(aligned_score_error(est, model, i)), 1e-7);
}

TEST(EstimateCosie, NoiselessRecoveryUndirected) {
  const CosieModel model = oracle::small_model(45, 3, 2, false, 2);
  SubspaceEstimate est = estimate_cosie(noiseless(model), {3, 3}, 3);
  EXPECT_LE(linalg::sin_theta(est.Uhat, model.U), 1e-8);
  align_to(est, model);
  for (Index i = 0; i < 2; ++i) EXPECT_LE(linalg::max_abs(aligned_score_error(est, model, i)), 1e-7);
}

TEST(EstimateCosie, SingleGraphCollapsesToAse) {
  const CosieModel model = oracle::small_model(80, 3, 1, true, 3);
  const GraphSample g = sample_cosie(model, Stream(4));
  const SubspaceEstimate est = estimate_cosie(g, {3}, 3);
  const SvdPair s = linalg::svd_top(g.A[0], 3);
  EXPECT_LE(linalg::sin_theta(est.Uhat, s.left.vectors), 1e-10);
}

TEST(EstimateCosie, StackedSvdMatchesProjectionAverage) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const CosieModel model = oracle::small_model(50, 3, 3, true, 10 + seed);
    const GraphSample g = sample_cosie(model, Stream(seed));
    const SubspaceEstimate est = estimate_cosie(g, {3, 4, 3}, 3);
    const Matrix ref = oracle::projection_average_top(est.Ulocal, 3);
    EXPECT_LE(linalg::sin_theta(est.Uhat, ref), 1e-9);
  }
}

TEST(EstimateCosie, GaugeContract) {
  const CosieModel model = oracle::small_model(60, 3, 2, true, 20);
  const SubspaceEstimate est = estimate_cosie(sample_cosie(model, Stream(1)), {3, 3}, 3);
  const Matrix O = oracle::random_orthogonal(3, 1), O2 = oracle::random_orthogonal(3, 2);
  SubspaceEstimate rot = est;
  rot.Uhat = est.Uhat * O;
  rot.Vhat = est.Vhat * O2;
  for (Index i = 0; i < 2; ++i) {
    rot.Rhat[static_cast<std::size_t>(i)] = O.transpose() * est.Rhat[static_cast<std::size_t>(i)] * O2;
    EXPECT_LE(linalg::max_abs(rot.Phat(i) - est.Phat(i)), 1e-10);
  }
}

TEST(EstimateCosie, LayerPermutationInvariance) {
  const CosieModel model = oracle::small_model(70, 3, 4, true, 21);
  const GraphSample g = sample_cosie(model, Stream(2));
  GraphSample p = g;
  std::reverse(p.A.begin(), p.A.end());
  const SubspaceEstimate a = estimate_cosie(g, {3, 3, 3, 3}, 3), b = estimate_cosie(p, {3, 3, 3, 3}, 3);
  const Matrix W = linalg::procrustes_align(b.Uhat, a.Uhat);
  EXPECT_LE(linalg::max_abs(b.Uhat * W - a.Uhat), 1e-9);
}

TEST(EstimateCosie, DimensionErrors) {
  const CosieModel model = oracle::small_model(30, 2, 2, true, 22);
  const GraphSample g = sample_cosie(model, Stream(3));
  EXPECT_THROW(estimate_cosie(g, {2, 2}, 3), Error);
  EXPECT_THROW(estimate_cosie(g, {2}, 2), Error);
  EXPECT_THROW(estimate_cosie(g, {31, 31}, 2), Error);
  EXPECT_THROW(estimate_cosie(GraphSample{}), Error);
}

TEST(SelectBlockDims, CompleteGraph) {
  const Index n = 100;
  Matrix A = Matrix::Ones(n, n);
  A.diagonal().setZero();
  GraphSample g;
  g.directed = false;
  g.A = {A};
  const DimSelection sel = select_block_dims(g);
  EXPECT_EQ(sel.dims[0], 1);
  EXPECT_EQ(sel.d, 1);
  EXPECT_NEAR(4.0 * std::sqrt(99.0), 39.8, 0.01);
}

TEST(SelectBlockDims, EmptyGraphHasNoSignal) {
  GraphSample g;
  g.directed = true;
  g.A = {Matrix::Zero(20, 20), Matrix::Zero(20, 20)};
  try {
    select_block_dims(g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::no_signal);
  }
}

TEST(SelectBlockDims, ModeTiesGoToSmallest) {
  const Index n = 200;
  auto planted = [&](Index K) {
    SbmSpec spec;
    spec.directed = false;
    spec.tau.resize(n);
    for (Index s = 0; s < n; ++s) spec.tau[static_cast<std::size_t>(s)] = static_cast<int>(s % K);
    Matrix B = Matrix::Constant(K, K, 0.0);
    B.diagonal().setConstant(1.0);
    spec.B = {B};
    return sbm_to_cosie(spec).P(0);
  };
  GraphSample g;
  g.directed = false;
  g.A = {planted(2), planted(4)};
  const DimSelection sel = select_block_dims(g);
  EXPECT_EQ(sel.dims[0], 2);
  EXPECT_EQ(sel.dims[1], 4);
  EXPECT_EQ(sel.d, 2);
}

TEST(SharedIndividual, FullySharedSelectsAllDims) {
  const CosieModel model = oracle::small_model(300, 3, 3, false, 30);
  GraphSample g;
  g.directed = false;
  for (Index i = 0; i < 3; ++i) g.A.push_back(model.P(i));
  const SharedIndividualEstimate est = estimate_shared_individual(g, {3, 3, 3});
  EXPECT_EQ(est.d0_U, 3);
  const SubspaceEstimate full = estimate_cosie(g, {3, 3, 3}, 3);
  EXPECT_LE(linalg::sin_theta(est.Uc, full.Uhat), 1e-9);
}

TEST(SharedIndividual, PlantedProjectionAverageSpectrum) {
  const Index n = 40, d0 = 2, m = 3;
  const Matrix Q = oracle::random_orthonormal(n, d0 + m, 31);
  std::vector<Matrix> locals;
  for (Index i = 0; i < m; ++i) {
    Matrix L(n, d0 + 1);
    L << Q.leftCols(d0), Q.col(d0 + i);
    locals.push_back(L);
  }
  const SharedSplit split = split_shared(locals, std::nullopt, 0.9);
  ASSERT_EQ(split.common.cols(), d0);
  EXPECT_NEAR(split.pi_values(0), 1.0, 1e-12);
  EXPECT_NEAR(split.pi_values(1), 1.0, 1e-12);
  for (Index j = 2; j < 5; ++j) EXPECT_NEAR(split.pi_values(j), 1.0 / m, 1e-12);
  EXPECT_LE(linalg::sin_theta(split.common, Q.leftCols(d0)), 1e-10);
  for (Index i = 0; i < m; ++i) {
    const Matrix& Us = split.individual[static_cast<std::size_t>(i)];
    EXPECT_LE(linalg::max_abs(split.common.transpose() * Us), 1e-9);
    EXPECT_LE(linalg::sin_theta(Us, Q.col(d0 + i)), 1e-10);
  }
  EXPECT_FALSE(split.degenerate_residual);
}

TEST(SharedIndividual, SingleBlockHasNoSeparation) {
  const Matrix Q = oracle::random_orthonormal(20, 3, 32);
  const SharedSplit split = split_shared({Q}, 2, 1.0);
  EXPECT_TRUE(split.no_separation);
}

TEST(SharedIndividual, ResidualOrthogonalToCommon) {
  const Matrix Q = oracle::random_orthonormal(20, 2, 33);
  std::vector<Matrix> locals = {Q, Q};
  const SharedSplit split = split_shared(locals, 1, 1.0);
  for (const Matrix& Us : split.individual) {
    EXPECT_EQ(Us.cols(), 1);
    EXPECT_LE(linalg::max_abs(split.common.transpose() * Us), 1e-9);
    EXPECT_LE(linalg::orthonormality_error(Us), 1e-10);
  }
}

TEST(SharedIndividual, ThresholdAndErrors) {
  EXPECT_NEAR(shared_dim_threshold(400, 0.25), 1.0 - std::log(400.0) / 10.0, 1e-14);
  EXPECT_THROW(shared_dim_threshold(400, 0.0), Error);
  const Matrix Q = oracle::random_orthonormal(20, 2, 34);
  EXPECT_THROW(split_shared({Q, Q}, 3, 1.0), Error);
  const Matrix R = oracle::random_orthonormal(20, 2, 35);
  try {
    split_shared({Q, R}, std::nullopt, 0.999);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::no_signal);
  }
}

TEST(Communities, NoiselessPerfect) {
  Stream rng(40);
  SbmSpec spec;
  spec.directed = false;
  spec.tau = random_memberships(90, 3, rng);
  Matrix B = Matrix::Constant(3, 3, 0.1);
  B.diagonal().setConstant(0.5);
  spec.B = {B, B};
  const CosieModel model = sbm_to_cosie(spec);
  const SubspaceEstimate est = estimate_cosie(noiseless(model), {3, 3}, 3);
  EXPECT_EQ(misclassification_rate(recover_communities(est.Uhat, 3, 1), spec.tau), 0.0);
}

TEST(Communities, EachPointItsOwnCluster) {
  const Matrix X = oracle::random_matrix(6, 2, 41);
  auto labels = recover_communities(X, 6, 2);
  std::sort(labels.begin(), labels.end());
  for (int i = 0; i < 6; ++i) EXPECT_EQ(labels[static_cast<std::size_t>(i)], i);
  EXPECT_THROW(recover_communities(X, 7), Error);
  EXPECT_THROW(recover_communities(X, 1), Error);
}

TEST(Communities, MisclassificationIsPermutationFree) {
  const std::vector<int> truth = {0, 0, 1, 1, 2, 2};
  EXPECT_EQ(misclassification_rate({2, 2, 0, 0, 1, 1}, truth), 0.0);
  EXPECT_NEAR(misclassification_rate({2, 2, 0, 1, 1, 1}, truth), 1.0 / 6.0, 1e-15);
}
