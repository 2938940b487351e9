#ifndef COSIE_TEST_ORACLES_HPP
#define COSIE_TEST_ORACLES_HPP

// Independent reference implementations. Deliberately slow and literal.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "cosie/cosie.hpp"

namespace oracle {

using cosie::Index;
using cosie::Matrix;
using cosie::Vector;

inline Matrix random_matrix(Index r, Index c, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  Matrix M(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) M(i, j) = z(gen);
  return M;
}

inline Matrix random_symmetric(Index n, unsigned seed) {
  const Matrix G = random_matrix(n, n, seed);
  return (G + G.transpose()) / 2.0;
}

inline Matrix random_orthogonal(Index d, unsigned seed) {
  Eigen::HouseholderQR<Matrix> qr(random_matrix(d, d, seed));
  Matrix Q = qr.householderQ();
  const Matrix R = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index j = 0; j < d; ++j)
    if (R(j, j) < 0) Q.col(j) *= -1.0;
  return Q;
}

inline Matrix random_orthonormal(Index n, Index d, unsigned seed) {
  Eigen::HouseholderQR<Matrix> qr(random_matrix(n, d, seed));
  return Matrix(qr.householderQ()).leftCols(d);
}

struct Eig {
  Vector values;  // descending
  Matrix vectors;
};

// Cyclic Jacobi rotations.
inline Eig jacobi(Matrix A) {
  const Index n = A.rows();
  Matrix V = Matrix::Identity(n, n);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Index p = 0; p < n; ++p)
      for (Index q = p + 1; q < n; ++q) off += A(p, q) * A(p, q);
    if (off < 1e-30 * std::max(1.0, A.squaredNorm())) break;
    for (Index p = 0; p < n; ++p)
      for (Index q = p + 1; q < n; ++q) {
        if (std::abs(A(p, q)) < 1e-300) continue;
        const double theta = (A(q, q) - A(p, p)) / (2.0 * A(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (Index k = 0; k < n; ++k) {
          const double akp = A(k, p), akq = A(k, q);
          A(k, p) = c * akp - s * akq;
          A(k, q) = s * akp + c * akq;
        }
        for (Index k = 0; k < n; ++k) {
          const double apk = A(p, k), aqk = A(q, k);
          A(p, k) = c * apk - s * aqk;
          A(q, k) = s * apk + c * aqk;
        }
        for (Index k = 0; k < n; ++k) {
          const double vkp = V(k, p), vkq = V(k, q);
          V(k, p) = c * vkp - s * vkq;
          V(k, q) = s * vkp + c * vkq;
        }
      }
  }
  std::vector<Index> idx(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  std::sort(idx.begin(), idx.end(), [&](Index a, Index b) { return A(a, a) > A(b, b); });
  Eig e{Vector(n), Matrix(n, n)};
  for (Index i = 0; i < n; ++i) {
    e.values(i) = A(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(i)]);
    e.vectors.col(i) = V.col(idx[static_cast<std::size_t>(i)]);
  }
  return e;
}

// Singular values of M from the eigenvalues of the dilation [[0, M], [M^T, 0]].
inline Vector dilation_singular_values(const Matrix& M) {
  const Index r = M.rows(), c = M.cols();
  Matrix H = Matrix::Zero(r + c, r + c);
  H.topRightCorner(r, c) = M;
  H.bottomLeftCorner(c, r) = M.transpose();
  return jacobi(H).values.head(std::min(r, c));
}

inline Matrix kron(const Matrix& A, const Matrix& B) {
  Matrix K(A.rows() * B.rows(), A.cols() * B.cols());
  for (Index i = 0; i < A.rows(); ++i)
    for (Index j = 0; j < A.cols(); ++j)
      for (Index k = 0; k < B.rows(); ++k)
        for (Index l = 0; l < B.cols(); ++l) K(i * B.rows() + k, j * B.cols() + l) = A(i, j) * B(k, l);
  return K;
}

inline Vector vec(const Matrix& M) {
  Vector v(M.size());
  Index p = 0;
  for (Index j = 0; j < M.cols(); ++j)
    for (Index i = 0; i < M.rows(); ++i) v(p++) = M(i, j);
  return v;
}

// D_n built pair by pair: column (s <= t) has ones at vec positions (s,t) and (t,s).
inline Matrix duplication(Index n) {
  Matrix D = Matrix::Zero(n * n, n * (n + 1) / 2);
  Index col = 0;
  for (Index t = 0; t < n; ++t)
    for (Index s = t; s < n; ++s) {
      D(s + t * n, col) = 1.0;
      D(t + s * n, col) = 1.0;
      ++col;
    }
  return D;
}

inline Vector vech(const Matrix& M) {
  const Index n = M.rows();
  Vector v(n * (n + 1) / 2);
  Index p = 0;
  for (Index t = 0; t < n; ++t)
    for (Index s = t; s < n; ++s) v(p++) = M(s, t);
  return v;
}

inline Matrix bernoulli_variance(const Matrix& P) {
  Matrix W(P.rows(), P.cols());
  for (Index i = 0; i < P.rows(); ++i)
    for (Index j = 0; j < P.cols(); ++j) {
      const double p = std::clamp(P(i, j), 0.0, 1.0);
      W(i, j) = p * (1.0 - p);
    }
  return W;
}

// (V (x) U)^T diag(vec W) (V (x) U), materialized.
inline Matrix sigma(const Matrix& U, const Matrix& V, const Matrix& W) {
  const Matrix X = kron(V, U);
  return X.transpose() * vec(W).asDiagonal() * X;
}

// Entrywise quadruple sum of the same quantity.
inline Matrix sigma_loops(const Matrix& U, const Matrix& V, const Matrix& W) {
  const Index d = U.cols(), n = U.rows();
  Matrix S = Matrix::Zero(d * d, d * d);
  for (Index a = 0; a < d; ++a)
    for (Index b = 0; b < d; ++b)
      for (Index c = 0; c < d; ++c)
        for (Index e = 0; e < d; ++e) {
          double acc = 0.0;
          for (Index s = 0; s < n; ++s)
            for (Index t = 0; t < W.cols(); ++t) acc += W(s, t) * U(s, a) * V(t, b) * U(s, c) * V(t, e);
          S(a + b * d, c + e * d) = acc;
        }
  return S;
}

// U^T diag(row sums of W) U by explicit loops.
inline Matrix weighted_gram(const Matrix& U, const Vector& weights) {
  const Index d = U.cols();
  Matrix G = Matrix::Zero(d, d);
  for (Index a = 0; a < d; ++a)
    for (Index b = 0; b < d; ++b)
      for (Index s = 0; s < U.rows(); ++s) G(a, b) += U(s, a) * U(s, b) * weights(s);
  return G;
}

inline Vector mu(const cosie::CosieModel& model, Index i) {
  const Index m = model.m(), n = model.n();
  const double md = static_cast<double>(m);
  std::vector<Matrix> Rinv, GU, GV;
  for (Index j = 0; j < m; ++j) {
    const Matrix& R = model.R[static_cast<std::size_t>(j)];
    Rinv.push_back(R.inverse());
    const Matrix W = bernoulli_variance(model.P(j));
    Vector rows = Vector::Zero(n), cols = Vector::Zero(n);
    for (Index s = 0; s < n; ++s)
      for (Index t = 0; t < n; ++t) {
        rows(s) += W(s, t);
        cols(t) += W(s, t);
      }
    GU.push_back(weighted_gram(model.U, rows));
    GV.push_back(weighted_gram(model.V, cols));
  }
  const std::size_t ii = static_cast<std::size_t>(i);
  const Matrix& Ri = model.R[ii];
  Matrix left = GU[ii] * Rinv[ii].transpose() / md;
  Matrix right = Rinv[ii].transpose() * GV[ii] / md;
  for (std::size_t j = 0; j < static_cast<std::size_t>(m); ++j) {
    left -= Ri * Rinv[j] * GU[j] * Rinv[j].transpose() / (2.0 * md * md);
    right -= Rinv[j].transpose() * GV[j] * Rinv[j] * Ri / (2.0 * md * md);
  }
  return vec(left) + vec(right);
}

// (1/m^2) sum_i R_i^{-T} (sum_t W_kt v_t v_t^T) R_i^{-1}
inline Matrix upsilon(const cosie::CosieModel& model, Index k) {
  const Index d = model.d();
  Matrix Y = Matrix::Zero(d, d);
  for (Index i = 0; i < model.m(); ++i) {
    const Matrix Rinv = model.R[static_cast<std::size_t>(i)].inverse();
    const Matrix W = bernoulli_variance(model.P(i));
    Matrix G = Matrix::Zero(d, d);
    for (Index t = 0; t < model.n(); ++t) G += W(k, t) * model.V.row(t).transpose() * model.V.row(t);
    Y += Rinv.transpose() * G * Rinv;
  }
  return Y / static_cast<double>(model.m() * model.m());
}

inline Matrix upsilon_v(const cosie::CosieModel& model, Index k) {
  const Index d = model.d();
  Matrix Y = Matrix::Zero(d, d);
  for (Index i = 0; i < model.m(); ++i) {
    const Matrix Rinv = model.R[static_cast<std::size_t>(i)].inverse();
    const Matrix W = bernoulli_variance(model.P(i));
    Matrix G = Matrix::Zero(d, d);
    for (Index s = 0; s < model.n(); ++s) G += W(s, k) * model.U.row(s).transpose() * model.U.row(s);
    Y += Rinv * G * Rinv.transpose();
  }
  return Y / static_cast<double>(model.m() * model.m());
}

// Covariance of vec(U^T A U) for symmetric A with independent vech entries.
inline Matrix undirected_upsilon(const Matrix& U, const Matrix& W) {
  const Matrix X = kron(U, U);
  const Matrix D = duplication(U.rows());
  return X.transpose() * D * vech(W).asDiagonal() * D.transpose() * X;
}

inline Matrix projection_average_top(const std::vector<Matrix>& locals, Index d) {
  const Index n = locals.front().rows();
  Matrix Pi = Matrix::Zero(n, n);
  for (const Matrix& L : locals) Pi += L * L.transpose() / static_cast<double>(locals.size());
  return jacobi(Pi).vectors.leftCols(d);
}

// sin of the largest principal angle via sqrt(1 - sigma_min(X^T Y)^2).
inline double sin_theta(const Matrix& X, const Matrix& Y) {
  const Vector s = dilation_singular_values(X.transpose() * Y);
  const double c = s.minCoeff();
  return std::sqrt(std::max(0.0, 1.0 - c * c));
}

inline double offdiag_frobenius(const Matrix& M) {
  double acc = 0.0;
  for (Index i = 0; i < M.rows(); ++i)
    for (Index j = 0; j < M.cols(); ++j)
      if (i != j) acc += M(i, j) * M(i, j);
  return std::sqrt(acc);
}

// Small random SBM-backed COSIE model with invertible R.
inline cosie::CosieModel small_model(Index n, Index K, Index m, bool directed, std::uint64_t seed) {
  cosie::Stream rng(seed);
  cosie::SbmSpec spec;
  spec.directed = directed;
  spec.tau = cosie::random_memberships(n, K, rng);
  if (directed) {
    cosie::Stream r2 = rng.substream(9);
    spec.phi = cosie::random_memberships(n, K, r2);
  }
  for (Index i = 0; i < m; ++i) {
    cosie::Stream bs = rng.substream(100 + static_cast<std::uint64_t>(i));
    spec.B.push_back(cosie::harness::admissible_uniform_B(K, bs, 0.05, 0.0, !directed));
  }
  return cosie::sbm_to_cosie(spec);
}

}  // namespace oracle

#endif
