#ifndef COSIE_INFERENCE_HPP
#define COSIE_INFERENCE_HPP

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "cosie/chi2.hpp"
#include "cosie/error.hpp"
#include "cosie/estimation.hpp"
#include "cosie/linalg.hpp"
#include "cosie/models.hpp"

namespace cosie {

/// Entrywise Bernoulli variances P(1 - P), with P clamped to [0,1] first.
inline Matrix bernoulli_variance(const Matrix& P) {
  const Matrix Pc = P.cwiseMax(0.0).cwiseMin(1.0);
  return Pc.cwiseProduct((1.0 - Pc.array()).matrix());
}

namespace detail {

/// Columns (a,c) -> X(s, a + c d) = X_sa X_sc.
inline Matrix pair_products(const Matrix& X) {
  const Index n = X.rows(), d = X.cols();
  Matrix out(n, d * d);
  for (Index c = 0; c < d; ++c)
    for (Index a = 0; a < d; ++a) out.col(a + c * d) = X.col(a).cwiseProduct(X.col(c));
  return out;
}

}  // namespace detail

/// (V (x) U)^T diag(vec W) (V (x) U) without forming the n^2 x n^2 diagonal:
/// entry ((a,b),(c,e)) = sum_st W_st U_sa V_tb U_sc V_te.
inline Matrix score_covariance(const Matrix& U, const Matrix& V, const Matrix& W) {
  require(U.rows() == W.rows() && V.rows() == W.cols() && U.cols() == V.cols(), Errc::shape_mismatch,
          "score_covariance: incompatible shapes");
  const Index d = U.cols();
  const Matrix M = detail::pair_products(U).transpose() * W * detail::pair_products(V);
  Matrix S(d * d, d * d);
  for (Index e = 0; e < d; ++e)
    for (Index c = 0; c < d; ++c)
      for (Index b = 0; b < d; ++b)
        for (Index a = 0; a < d; ++a) S(a + b * d, c + e * d) = M(a + c * d, b + e * d);
  return 0.5 * (S + S.transpose());
}

inline Matrix sigma_score(const CosieModel& model, Index i) {
  require(i >= 0 && i < model.m(), Errc::out_of_range, "layer index out of range");
  return score_covariance(model.U, model.V, bernoulli_variance(model.P(i)));
}

/// Plug-in covariance from Phat = Uhat Rhat(i) Vhat^T clamped to [0,1].
inline Matrix sigma_score_plugin(const SubspaceEstimate& est, Index i) {
  require(i >= 0 && i < est.m(), Errc::out_of_range, "layer index out of range");
  return score_covariance(est.Uhat, est.Vhat, bernoulli_variance(est.Phat(i)));
}

enum class Side { U, V };

/// Limiting covariance of row k of Uhat W_U - U (or of the V side).
inline Matrix upsilon_row(const CosieModel& model, Index k, Side side = Side::U) {
  require(k >= 0 && k < model.n(), Errc::out_of_range, "row index out of range");
  const Index d = model.d();
  const double m = static_cast<double>(model.m());
  Matrix Y = Matrix::Zero(d, d);
  for (Index i = 0; i < model.m(); ++i) {
    const Matrix& R = model.R[static_cast<std::size_t>(i)];
    const Matrix Rinv = linalg::checked_inverse(R, "R(i)");
    const Matrix W = bernoulli_variance(model.P(i));
    if (side == Side::U) {
      const Matrix G = model.V.transpose() * W.row(k).transpose().asDiagonal() * model.V;
      Y += Rinv.transpose() * G * Rinv;
    } else {
      const Matrix G = model.U.transpose() * W.col(k).asDiagonal() * model.U;
      Y += Rinv * G * Rinv.transpose();
    }
  }
  Y /= m * m;
  return 0.5 * (Y + Y.transpose());
}

/// Per-layer factors P(i) = U(i) R(i) V(i)^T of a model whose layers share
/// only part of their subspaces.
struct LayerFactors {
  Matrix U;
  Matrix R;
  Matrix V;
};

/// Row covariance of the shared-subspace estimate Uc_hat W - Uc at row k.
inline Matrix upsilon_row_shared(const Matrix& Uc, const std::vector<LayerFactors>& layers, Index k) {
  require(!layers.empty(), Errc::invalid_argument, "no layers");
  require(k >= 0 && k < Uc.rows(), Errc::out_of_range, "row index out of range");
  const double m = static_cast<double>(layers.size());
  Matrix Y = Matrix::Zero(Uc.cols(), Uc.cols());
  for (const LayerFactors& L : layers) {
    const Matrix Rinv = linalg::checked_inverse(L.R, "R(i)");
    const Matrix W = bernoulli_variance(L.U * L.R * L.V.transpose());
    const Matrix H = Uc.transpose() * L.U * Rinv.transpose();
    const Matrix G = L.V.transpose() * W.row(k).transpose().asDiagonal() * L.V;
    Y += H * G * H.transpose();
  }
  Y /= m * m;
  return 0.5 * (Y + Y.transpose());
}

/// Bias of vec(W_U^T Rhat(i) W_V - R(i)).
inline Vector mu_bias(const CosieModel& model, Index i) {
  require(i >= 0 && i < model.m(), Errc::out_of_range, "layer index out of range");
  const Index m = model.m();
  const double md = static_cast<double>(m);
  std::vector<Matrix> Rinv, UDU, VDV;
  for (Index j = 0; j < m; ++j) {
    Rinv.push_back(linalg::checked_inverse(model.R[static_cast<std::size_t>(j)], "R(j)"));
    const Matrix W = bernoulli_variance(model.P(j));
    const Vector row = W.rowwise().sum();
    const Vector col = W.colwise().sum().transpose();
    UDU.push_back(model.U.transpose() * row.asDiagonal() * model.U);
    VDV.push_back(model.V.transpose() * col.asDiagonal() * model.V);
  }
  const std::size_t ii = static_cast<std::size_t>(i);
  const Matrix& Ri = model.R[ii];
  Matrix left = UDU[ii] * Rinv[ii].transpose() / md;
  Matrix right = Rinv[ii].transpose() * VDV[ii] / md;
  for (std::size_t j = 0; j < static_cast<std::size_t>(m); ++j) {
    left -= Ri * Rinv[j] * UDU[j] * Rinv[j].transpose() / (2.0 * md * md);
    right -= Rinv[j].transpose() * VDV[j] * Rinv[j] * Ri / (2.0 * md * md);
  }
  return linalg::vec(left) + linalg::vec(right);
}

struct UndirectedScoreQuantities {
  Matrix vech_sigma;    // L Sigma L^T
  Vector vech_mu;       // L mu
  Matrix upsilon;       // (U (x) U)^T D_n D D_n^T (U (x) U), d^2 x d^2
  Matrix vech_upsilon;  // L upsilon L^T, covariance of vech(Rhat(i))
};

/// Covariance of vec(U^T A U) for symmetric A with independent upper-triangle
/// entries of variance W (symmetric).
inline Matrix undirected_score_covariance(const Matrix& U, const Matrix& W) {
  const Index d = U.cols();
  const Matrix S = score_covariance(U, U, W);
  Matrix Y = S + S * linalg::commutation(d);
  const Matrix Q = detail::pair_products(U);  // Q(s, a + b d) = U_sa U_sb
  Y -= Q.transpose() * W.diagonal().asDiagonal() * Q;
  return 0.5 * (Y + Y.transpose());
}

inline UndirectedScoreQuantities undirected_score_quantities(const CosieModel& model, Index i) {
  require(!model.directed, Errc::invalid_argument, "undirected_score_quantities needs an undirected model");
  require(i >= 0 && i < model.m(), Errc::out_of_range, "layer index out of range");
  const Matrix L = linalg::elimination(model.d());
  const Matrix W = bernoulli_variance(model.P(i));
  UndirectedScoreQuantities q;
  const Matrix S = score_covariance(model.U, model.U, W);
  q.vech_sigma = L * S * L.transpose();
  q.vech_mu = L * mu_bias(model, i);
  q.upsilon = undirected_score_covariance(model.U, W);
  q.vech_upsilon = L * q.upsilon * L.transpose();
  return q;
}

inline UndirectedScoreQuantities undirected_score_quantities(const SubspaceEstimate& est, Index i) {
  require(!est.directed, Errc::invalid_argument, "undirected_score_quantities needs an undirected estimate");
  require(i >= 0 && i < est.m(), Errc::out_of_range, "layer index out of range");
  const Matrix L = linalg::elimination(est.d());
  const Matrix W = bernoulli_variance(est.Phat(i));
  UndirectedScoreQuantities q;
  q.vech_sigma = L * score_covariance(est.Uhat, est.Uhat, W) * L.transpose();
  q.upsilon = undirected_score_covariance(est.Uhat, W);
  q.vech_upsilon = L * q.upsilon * L.transpose();
  return q;
}

// ---- tests ----

enum class TestKind { two_sample, multi_sample, changepoint, post_hoc };

inline const char* test_kind_name(TestKind k) {
  switch (k) {
    case TestKind::two_sample: return "two_sample";
    case TestKind::multi_sample: return "multi_sample";
    case TestKind::changepoint: return "changepoint";
    case TestKind::post_hoc: return "post_hoc";
  }
  return "unknown";
}

struct TestReport {
  TestKind kind = TestKind::two_sample;
  std::vector<Index> indices;  // the pair (i, j), or every layer for multi_sample
  double statistic = 0.0;
  Index df = 0;
  double p_value = 1.0;
  double condition = 1.0;
  std::optional<double> noncentrality;
  double alpha = 0.0;  // adjusted level used for `reject`, 0 if none
  bool reject = false;
};

struct TestOptions {
  bool ridge = false;
  double ridge_eps = 1e-8;
  double max_condition = 1e12;
  // Bernoulli score covariances live on the scale of p(1-p) <= 1/4.
  double min_eigenvalue = 1e-12;
};

namespace detail {

/// x^T S^{-1} x through a symmetric factorization, with condition check.
inline double quadratic_form(const Matrix& S_in, const Vector& x, const TestOptions& opt, double* condition) {
  Matrix S = S_in;
  if (opt.ridge) S += opt.ridge_eps * (S.trace() / static_cast<double>(S.rows())) * Matrix::Identity(S.rows(), S.cols());
  const linalg::SymmetricFactor f(S);
  if (condition) *condition = f.condition();
  require(f.min_eigenvalue() > opt.min_eigenvalue && f.condition() < opt.max_condition, Errc::singular,
          "covariance is near-singular (condition " + std::to_string(f.condition()) + ")");
  return std::max(0.0, x.dot(f.solve(x)));
}

/// Per-layer test covariance and score vector; vech form for undirected.
struct LayerScores {
  std::vector<Vector> score;
  std::vector<Matrix> cov;
  Index dim = 0;
};

inline LayerScores layer_scores(const SubspaceEstimate& est) {
  LayerScores out;
  const Index d = est.d();
  if (est.directed) {
    out.dim = d * d;
    for (Index i = 0; i < est.m(); ++i) {
      out.score.push_back(linalg::vec(est.Rhat[static_cast<std::size_t>(i)]));
      out.cov.push_back(sigma_score_plugin(est, i));
    }
  } else {
    out.dim = linalg::vech_size(d);
    const Matrix L = linalg::elimination(d);
    for (Index i = 0; i < est.m(); ++i) {
      const Matrix& R = est.Rhat[static_cast<std::size_t>(i)];
      out.score.push_back(L * linalg::vec(0.5 * (R + R.transpose())));
      out.cov.push_back(undirected_score_quantities(est, i).vech_upsilon);
    }
  }
  return out;
}

inline TestReport pair_test(const LayerScores& ls, Index i, Index j, TestKind kind, const TestOptions& opt) {
  TestReport r;
  r.kind = kind;
  r.indices = {i, j};
  r.df = ls.dim;
  const std::size_t a = static_cast<std::size_t>(i), b = static_cast<std::size_t>(j);
  if (i == j) {
    r.statistic = 0.0;
  } else {
    r.statistic = quadratic_form(ls.cov[a] + ls.cov[b], ls.score[a] - ls.score[b], opt, &r.condition);
  }
  r.p_value = chi2_sf(r.statistic, static_cast<double>(r.df));
  return r;
}

}  // namespace detail

/// T_ij = vec(Rhat_i - Rhat_j)^T (Sigmahat_i + Sigmahat_j)^{-1} vec(Rhat_i - Rhat_j).
/// Undirected estimates use vech and df = d(d+1)/2.
inline TestReport two_sample_test(const SubspaceEstimate& est, Index i, Index j, const TestOptions& opt = {}) {
  require(i >= 0 && j >= 0 && i < est.m() && j < est.m(), Errc::out_of_range, "layer index out of range");
  return detail::pair_test(detail::layer_scores(est), i, j, TestKind::two_sample, opt);
}

inline TestReport multi_sample_test(const SubspaceEstimate& est, const TestOptions& opt = {}) {
  require(est.m() >= 2, Errc::invalid_argument, "multi-sample test needs m >= 2");
  const detail::LayerScores ls = detail::layer_scores(est);
  const double m = static_cast<double>(est.m());
  Vector mean = Vector::Zero(ls.dim);
  Matrix cov = Matrix::Zero(ls.dim, ls.dim);
  for (Index i = 0; i < est.m(); ++i) {
    mean += ls.score[static_cast<std::size_t>(i)] / m;
    cov += ls.cov[static_cast<std::size_t>(i)] / m;
  }
  TestReport r;
  r.kind = TestKind::multi_sample;
  for (Index i = 0; i < est.m(); ++i) r.indices.push_back(i);
  r.df = (est.m() - 1) * ls.dim;
  double total = 0.0;
  for (Index i = 0; i < est.m(); ++i)
    total += detail::quadratic_form(cov, ls.score[static_cast<std::size_t>(i)] - mean, opt, &r.condition);
  r.statistic = total;
  r.p_value = chi2_sf(r.statistic, static_cast<double>(r.df));
  return r;
}

/// Consecutive-pair tests T_{i,i+1}, flagged at Bonferroni level alpha/(m-1).
inline std::vector<TestReport> changepoint_scan(const SubspaceEstimate& est, double alpha,
                                                const TestOptions& opt = {}) {
  require(est.m() >= 2, Errc::invalid_argument, "changepoint scan needs m >= 2");
  require(alpha > 0.0 && alpha < 1.0, Errc::domain, "alpha must lie in (0,1)");
  const detail::LayerScores ls = detail::layer_scores(est);
  const double level = alpha / static_cast<double>(est.m() - 1);
  std::vector<TestReport> out;
  for (Index i = 0; i + 1 < est.m(); ++i) {
    TestReport r = detail::pair_test(ls, i, i + 1, TestKind::changepoint, opt);
    r.alpha = level;
    r.reject = r.p_value < level;
    out.push_back(r);
  }
  return out;
}

/// All pairwise tests at Bonferroni level alpha / C(m,2).
inline std::vector<TestReport> pairwise_tests(const SubspaceEstimate& est, double alpha, const TestOptions& opt = {}) {
  require(est.m() >= 2, Errc::invalid_argument, "pairwise tests need m >= 2");
  require(alpha > 0.0 && alpha < 1.0, Errc::domain, "alpha must lie in (0,1)");
  const detail::LayerScores ls = detail::layer_scores(est);
  const double pairs = 0.5 * static_cast<double>(est.m()) * static_cast<double>(est.m() - 1);
  std::vector<TestReport> out;
  for (Index i = 0; i < est.m(); ++i)
    for (Index j = i + 1; j < est.m(); ++j) {
      TestReport r = detail::pair_test(ls, i, j, TestKind::post_hoc, opt);
      r.alpha = alpha / pairs;
      r.reject = r.p_value < r.alpha;
      out.push_back(r);
    }
  return out;
}

/// Oracle noncentrality vec(R_i - R_j)^T (Sigma_i + Sigma_j)^{-1} vec(R_i - R_j).
inline double noncentrality(const CosieModel& model, Index i, Index j) {
  require(i >= 0 && j >= 0 && i < model.m() && j < model.m(), Errc::out_of_range, "layer index out of range");
  const std::size_t a = static_cast<std::size_t>(i), b = static_cast<std::size_t>(j);
  if (model.directed) {
    const Vector delta = linalg::vec(model.R[a] - model.R[b]);
    return detail::quadratic_form(sigma_score(model, i) + sigma_score(model, j), delta, {}, nullptr);
  }
  const Matrix L = linalg::elimination(model.d());
  const Vector delta = L * linalg::vec(model.R[a] - model.R[b]);
  const Matrix S = undirected_score_quantities(model, i).vech_upsilon + undirected_score_quantities(model, j).vech_upsilon;
  return detail::quadratic_form(S, delta, {}, nullptr);
}

}  // namespace cosie

#endif  // COSIE_INFERENCE_HPP
