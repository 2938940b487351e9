#ifndef COSIE_MULTINESS_HPP
#define COSIE_MULTINESS_HPP

#include <vector>

#include "cosie/error.hpp"
#include "cosie/estimation.hpp"
#include "cosie/linalg.hpp"
#include "cosie/models.hpp"

namespace cosie {

struct MultinessEstimate {
  Matrix Fhat;
  std::vector<Matrix> Ghat;
  std::vector<Matrix> Phat;
  Matrix Uc;
  std::vector<Matrix> Us;
  bool no_separation = false;
  bool degenerate_residual = false;
};

inline MultinessEstimate estimate_multiness(const std::vector<Matrix>& A, Index d1, Index d2) {
  require(!A.empty(), Errc::invalid_argument, "no matrices");
  const Index n = A.front().rows();
  require(d1 >= 1 && d2 >= 0 && d1 + d2 <= n, Errc::out_of_range, "need 1 <= d1 and d1 + d2 <= n");
  std::vector<Matrix> locals;
  Matrix Abar = Matrix::Zero(n, n);
  for (const Matrix& a : A) {
    require(a.rows() == n && a.cols() == n, Errc::shape_mismatch, "matrices must all be n x n");
    require(linalg::is_symmetric(a), Errc::non_symmetric, "MultiNeSS layers must be symmetric");
    locals.push_back(linalg::eig_sym_top(a, d1 + d2, Order::magnitude).vectors);
    Abar += a / static_cast<double>(A.size());
  }
  SharedSplit split = split_shared(locals, d1, 1.0);

  MultinessEstimate est;
  est.no_separation = split.no_separation;
  est.degenerate_residual = split.degenerate_residual;
  est.Uc = std::move(split.common);
  est.Us = std::move(split.individual);
  const Matrix Pc = est.Uc * est.Uc.transpose();
  est.Fhat = Pc * Abar * Pc;
  for (std::size_t i = 0; i < A.size(); ++i) {
    const Matrix Ps = est.Us[i] * est.Us[i].transpose();
    est.Ghat.push_back(Ps * A[i] * Ps);
    Matrix B(n, d1 + d2);
    B << est.Uc, est.Us[i];
    const Matrix Pcs = B * B.transpose();
    est.Phat.push_back(Pcs * A[i] * Pcs);
  }
  return est;
}

/// Frobenius norm with the diagonal ignored.
inline double offdiag_frobenius(const Matrix& M) {
  const double diag = M.diagonal().squaredNorm();
  return std::sqrt(std::max(0.0, M.squaredNorm() - diag));
}

struct MultinessErrors {
  double ErrF = 0.0;
  double ErrG = 0.0;
  double ErrP = 0.0;
};

inline MultinessErrors multiness_errors(const MultinessEstimate& est, const MultinessModel& truth) {
  require(static_cast<Index>(est.Ghat.size()) == truth.m(), Errc::shape_mismatch, "layer count mismatch");
  auto rel = [](const Matrix& hat, const Matrix& ref) {
    const double den = offdiag_frobenius(ref);
    require(den > 0.0, Errc::degenerate, "reference matrix has zero off-diagonal norm");
    return offdiag_frobenius(hat - ref) / den;
  };
  MultinessErrors e;
  e.ErrF = rel(est.Fhat, truth.F());
  for (Index i = 0; i < truth.m(); ++i) {
    e.ErrG += rel(est.Ghat[static_cast<std::size_t>(i)], truth.G(i));
    e.ErrP += rel(est.Phat[static_cast<std::size_t>(i)], truth.P(i));
  }
  e.ErrG /= static_cast<double>(truth.m());
  e.ErrP /= static_cast<double>(truth.m());
  return e;
}

}  // namespace cosie

#endif  // COSIE_MULTINESS_HPP
