#ifndef COSIE_DPCA_HPP
#define COSIE_DPCA_HPP

#include <optional>
#include <vector>

#include "cosie/error.hpp"
#include "cosie/estimation.hpp"
#include "cosie/linalg.hpp"
#include "cosie/models.hpp"

namespace cosie {

struct DpcaEstimate {
  Matrix Uhat;
  std::vector<Matrix> locals;
  std::optional<Matrix> W;  // Procrustes alignment Uhat -> truth
};

/// Sample covariance X X^T / n, or the centered version (still over n).
inline Matrix local_covariance(const Matrix& X, bool demean) {
  const double n = static_cast<double>(X.cols());
  if (!demean) return X * X.transpose() / n;
  const Matrix Xc = X.colwise() - X.rowwise().mean();
  return Xc * Xc.transpose() / n;
}

/// Top-d eigenvectors of one node's sample covariance.
inline Matrix local_pca(const Matrix& X, Index d, bool demean = false) {
  linalg::require_finite(X, "node data");
  require(d >= 1 && d <= X.rows(), Errc::out_of_range, "d must lie in [1, D]");
  require(X.cols() >= (demean ? d + 1 : d), Errc::insufficient_samples, "too few samples on a node for d components");
  return linalg::eig_sym_top(local_covariance(X, demean), d).vectors;
}

/// Central step: sees only the D x d summaries from each node.
inline DpcaEstimate aggregate_pca(const std::vector<Matrix>& locals) {
  require(!locals.empty(), Errc::invalid_argument, "no local estimates");
  const Index D = locals.front().rows(), d = locals.front().cols();
  for (const Matrix& L : locals)
    require(L.rows() == D && L.cols() == d, Errc::shape_mismatch, "local estimates differ in shape");
  DpcaEstimate est;
  est.locals = locals;
  est.Uhat = linalg::svd_top(detail::hstack(locals), d).left.vectors;
  return est;
}

inline DpcaEstimate distributed_pca(const std::vector<Matrix>& nodes, Index d, bool demean = false) {
  require(!nodes.empty(), Errc::invalid_argument, "no node data");
  std::vector<Matrix> locals;
  for (const Matrix& X : nodes) locals.push_back(local_pca(X, d, demean));
  return aggregate_pca(locals);
}

inline Matrix dpca_row_covariance(const SpikedModel& model, Index N) {
  model.validate();
  require(N >= 1, Errc::invalid_argument, "N must be positive");
  return (model.sigma2 / static_cast<double>(N)) * model.lambda.cwiseInverse().asDiagonal().toDenseMatrix();
}

/// Heterogeneous nodes: (1/(N m)) sum_i zeta_i Lambda_i^{-1}, N = total samples.
inline Matrix dpca_row_covariance_heterogeneous(const std::vector<Vector>& lambdas, const std::vector<double>& zeta,
                                                Index N) {
  require(!lambdas.empty() && lambdas.size() == zeta.size(), Errc::shape_mismatch,
          "need one zeta per node spectrum");
  require(N >= 1, Errc::invalid_argument, "N must be positive");
  const Index d = lambdas.front().size();
  Matrix Y = Matrix::Zero(d, d);
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    require(lambdas[i].size() == d, Errc::shape_mismatch, "node spectra differ in length");
    require((lambdas[i].array() > 0.0).all(), Errc::domain, "node spikes must be positive");
    Y.diagonal() += zeta[i] * lambdas[i].cwiseInverse();
  }
  return Y / (static_cast<double>(N) * static_cast<double>(lambdas.size()));
}

struct SubspaceErrors {
  double procrustes_frobenius = 0.0;
  double sin_theta = 0.0;
  double two_to_inf = 0.0;
};

/// ||Uhat W - U||_F, sin-theta distance and ||Uhat W - U||_{2->inf}.
inline SubspaceErrors subspace_errors(const Matrix& Uhat, const Matrix& U) {
  const Matrix W = linalg::procrustes_align(Uhat, U);
  const Matrix diff = Uhat * W - U;
  return {diff.norm(), linalg::sin_theta(Uhat, U), linalg::two_to_inf_norm(diff)};
}

inline SubspaceErrors dpca_errors(const DpcaEstimate& est, const Matrix& U) { return subspace_errors(est.Uhat, U); }

}  // namespace cosie

#endif  // COSIE_DPCA_HPP
