#ifndef COSIE_LINALG_HPP
#define COSIE_LINALG_HPP

// Dense real linear algebra used throughout the library: symmetric
// eigendecomposition (full and truncated), SVD through the Hermitian
// dilation, orthogonal Procrustes, subspace distances and the
// vec / vech / Kronecker machinery.
//
// Eigen supplies storage and matrix products. The eigensolvers are our own:
// Householder tridiagonalization followed by implicit Wilkinson-shift QR for
// dense problems, and a block Krylov Rayleigh-Ritz iteration (which calls the
// dense solver on its projected matrix) for a few extreme eigenpairs of a
// large operator.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cosie/error.hpp"
#include "cosie/rng.hpp"

namespace cosie {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Eigen- or singular values (non-increasing) with orthonormal vectors.
struct SpectralPair {
  Vector values;
  Matrix vectors;
};

/// Left and right singular pairs; both carry the same singular values.
struct SvdPair {
  SpectralPair left;
  SpectralPair right;
};

/// Which end of the spectrum `eig_sym_top` returns.
enum class Order {
  algebraic,  ///< k largest eigenvalues
  magnitude,  ///< k eigenvalues largest in modulus, sorted by modulus
};

namespace linalg {

inline double max_abs(const Matrix& M) { return M.size() == 0 ? 0.0 : M.cwiseAbs().maxCoeff(); }

inline void require_finite(const Matrix& M, const char* what) {
  require(M.rows() >= 1 && M.cols() >= 1, Errc::invalid_argument, std::string(what) + " is empty");
  require(M.allFinite(), Errc::non_finite, std::string(what) + " has NaN/Inf entries");
}

inline bool is_symmetric(const Matrix& M, double rel_tol = 1e-10) {
  if (M.rows() != M.cols()) return false;
  const double scale = std::max(max_abs(M), std::numeric_limits<double>::min());
  return max_abs(M - M.transpose()) <= rel_tol * scale;
}

inline double orthonormality_error(const Matrix& X) {
  return max_abs(X.transpose() * X - Matrix::Identity(X.cols(), X.cols()));
}

inline bool is_orthonormal(const Matrix& X, double tol = 1e-8) {
  return X.rows() >= X.cols() && orthonormality_error(X) <= tol;
}

/// Flips each column so that its first entry with |x| > 1e-12 is positive.
/// The same flips are applied to `partner` (the other singular factor).
inline void fix_signs(Matrix& V, Matrix* partner = nullptr) {
  for (Index j = 0; j < V.cols(); ++j) {
    for (Index i = 0; i < V.rows(); ++i) {
      const double x = V(i, j);
      if (std::abs(x) > 1e-12) {
        if (x < 0) {
          V.col(j) *= -1.0;
          if (partner) partner->col(j) *= -1.0;
        }
        break;
      }
    }
  }
}

namespace detail {

inline Matrix gaussian_block(Index rows, Index cols, std::uint64_t seed) {
  Stream s(seed);
  Matrix G(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) G(i, j) = s.normal();
  return G;
}

/// Orthogonalizes `w` against the first `cols` columns of Q (repeated
/// classical Gram-Schmidt) and stores it as column `cols` if it carries a
/// direction not already spanned.
inline bool append_orthonormal(Matrix& Q, Index cols, Vector w) {
  const double norm0 = w.norm();
  if (!(norm0 > 0.0)) return false;
  double prev = norm0;
  double norm = norm0;
  for (int pass = 0; pass < 3; ++pass) {
    if (cols > 0) {
      const Vector c = Q.leftCols(cols).transpose() * w;
      w.noalias() -= Q.leftCols(cols) * c;
    }
    norm = w.norm();
    if (norm > 0.7 * prev) break;
    prev = norm;
  }
  if (norm <= 1e-10 * norm0) return false;
  Q.col(cols) = w / norm;
  return true;
}

inline void sort_descending(SpectralPair& sp, Order order = Order::algebraic) {
  const Index k = sp.values.size();
  std::vector<Index> idx(static_cast<std::size_t>(k));
  std::iota(idx.begin(), idx.end(), Index{0});
  const Vector& v = sp.values;
  if (order == Order::algebraic) {
    std::stable_sort(idx.begin(), idx.end(), [&](Index a, Index b) { return v(a) > v(b); });
  } else {
    std::stable_sort(idx.begin(), idx.end(),
                     [&](Index a, Index b) { return std::abs(v(a)) > std::abs(v(b)); });
  }
  SpectralPair out{Vector(k), Matrix(sp.vectors.rows(), k)};
  for (Index j = 0; j < k; ++j) {
    out.values(j) = v(idx[static_cast<std::size_t>(j)]);
    out.vectors.col(j) = sp.vectors.col(idx[static_cast<std::size_t>(j)]);
  }
  sp = std::move(out);
}

/// Householder reduction A = Q T Q^T. On return `diag`/`off` hold T and Q is
/// the accumulated orthogonal factor.
inline void tridiagonalize(Matrix A, Vector& diag, Vector& off, Matrix& Q) {
  const Index n = A.rows();
  diag.resize(n);
  off.setZero(std::max<Index>(n - 1, 0));
  std::vector<Vector> reflectors;
  std::vector<double> betas;
  reflectors.reserve(static_cast<std::size_t>(std::max<Index>(n - 2, 0)));
  for (Index k = 0; k + 2 < n; ++k) {
    const Index s = n - k - 1;
    Vector v = A.col(k).tail(s);
    const double x0 = v(0);
    const double tail2 = v.tail(s - 1).squaredNorm();
    double beta = 0.0;
    if (tail2 == 0.0) {
      off(k) = x0;
      v.setZero();
      v(0) = 1.0;
    } else {
      const double alpha = -std::copysign(std::sqrt(x0 * x0 + tail2), x0);
      const double v0 = x0 - alpha;
      v /= v0;
      v(0) = 1.0;
      beta = 2.0 / v.squaredNorm();
      off(k) = alpha;
      auto S = A.bottomRightCorner(s, s);
      Vector p = beta * (S * v);
      const Vector w = p - (0.5 * beta * p.dot(v)) * v;
      S.noalias() -= v * w.transpose();
      S.noalias() -= w * v.transpose();
    }
    reflectors.push_back(std::move(v));
    betas.push_back(beta);
  }
  diag = A.diagonal();
  if (n >= 2) off(n - 2) = A(n - 1, n - 2);

  Q.setIdentity(n, n);
  for (Index k = static_cast<Index>(reflectors.size()) - 1; k >= 0; --k) {
    const double beta = betas[static_cast<std::size_t>(k)];
    if (beta == 0.0) continue;
    const Vector& v = reflectors[static_cast<std::size_t>(k)];
    const Index s = n - k - 1;
    auto Qs = Q.bottomRightCorner(s, s);
    const Eigen::RowVectorXd vtQ = v.transpose() * Qs;
    Qs.noalias() -= (beta * v) * vtQ;
  }
}

/// Implicit symmetric QR with Wilkinson shifts on the tridiagonal (diag, off),
/// rotating the columns of Z along. At most 60 sweeps per eigenvalue.
inline void tridiagonal_qr(Vector& a, Vector& b, Matrix& Z) {
  const Index n = a.size();
  constexpr double eps = std::numeric_limits<double>::epsilon();
  constexpr int kSweepsPerEigenvalue = 60;
  Index q = n - 1;
  int sweeps = 0;
  while (q > 0) {
    for (Index i = 0; i < q; ++i) {
      if (std::abs(b(i)) <= eps * (std::abs(a(i)) + std::abs(a(i + 1))) ||
          std::abs(b(i)) < std::numeric_limits<double>::min())
        b(i) = 0.0;
    }
    if (b(q - 1) == 0.0) {
      --q;
      sweeps = 0;
      continue;
    }
    Index p = q - 1;
    while (p > 0 && b(p - 1) != 0.0) --p;

    if (++sweeps > kSweepsPerEigenvalue)
      throw Error(Errc::no_convergence, "tridiagonal QR exceeded 60 sweeps for one eigenvalue");

    const double d = 0.5 * (a(q - 1) - a(q));
    const double bq = b(q - 1);
    const double sgn = d >= 0.0 ? 1.0 : -1.0;
    const double mu = a(q) - bq * bq / (d + sgn * std::hypot(d, bq));
    double x = a(p) - mu;
    double z = b(p);
    double bulge = 0.0;
    for (Index k = p; k < q; ++k) {
      if (k > p) {
        x = b(k - 1);
        z = bulge;
      }
      const double r = std::hypot(x, z);
      const double c = r == 0.0 ? 1.0 : x / r;
      const double s = r == 0.0 ? 0.0 : z / r;
      if (k > p) b(k - 1) = r;
      const double ak = a(k), ak1 = a(k + 1), bk = b(k);
      a(k) = c * c * ak + 2.0 * c * s * bk + s * s * ak1;
      a(k + 1) = s * s * ak - 2.0 * c * s * bk + c * c * ak1;
      b(k) = c * s * (ak1 - ak) + (c * c - s * s) * bk;
      if (k + 1 < q) {
        bulge = s * b(k + 1);
        b(k + 1) = c * b(k + 1);
      }
      Vector zk = Z.col(k);
      Z.col(k) = c * zk + s * Z.col(k + 1);
      Z.col(k + 1) = -s * zk + c * Z.col(k + 1);
    }
  }
}

}  // namespace detail

/// Every eigenpair of a symmetric matrix, eigenvalues non-increasing,
/// sign-normalized eigenvectors.
inline SpectralPair eig_sym_full(const Matrix& M) {
  require_finite(M, "eig_sym_full input");
  require(M.rows() == M.cols(), Errc::shape_mismatch, "eig_sym_full needs a square matrix");
  require(is_symmetric(M), Errc::non_symmetric, "eig_sym_full input is not symmetric");
  const Index n = M.rows();
  Vector diag, off;
  Matrix Q;
  detail::tridiagonalize(0.5 * (M + M.transpose()), diag, off, Q);
  detail::tridiagonal_qr(diag, off, Q);
  SpectralPair sp{std::move(diag), std::move(Q)};
  detail::sort_descending(sp);
  fix_signs(sp.vectors);
  (void)n;
  return sp;
}

namespace detail {

inline SpectralPair select_top(const SpectralPair& full, Index k, Order order) {
  SpectralPair sp = full;
  sort_descending(sp, order);
  SpectralPair out{sp.values.head(k), sp.vectors.leftCols(k)};
  return out;
}

/// Block Krylov (residual-expansion) Rayleigh-Ritz for k extreme eigenpairs
/// of the symmetric operator `apply` of dimension n.
template <class Apply>
SpectralPair krylov_top(Index n, Index k, Apply&& apply, Order order) {
  const Index block = std::min(n, k + 5);
  const Index cap = std::min(n, std::max<Index>(6 * block, 48));
  constexpr int kMaxExpansions = 2000;

  Matrix Q(n, cap);
  Matrix AQ(n, cap);
  Index cols = 0;
  std::uint64_t draw = 0;
  auto random_vector = [&]() {
    return Vector(gaussian_block(n, 1, mix_seed({0x6b72796c6f76ULL, draw++})).col(0));
  };
  auto expand = [&](const Matrix& W) {
    const Index start = cols;
    for (Index j = 0; j < W.cols() && cols < cap; ++j) {
      if (append_orthonormal(Q, cols, W.col(j))) {
        ++cols;
        continue;
      }
      for (int attempt = 0; attempt < 4 && cols < cap; ++attempt) {
        if (append_orthonormal(Q, cols, random_vector())) {
          ++cols;
          break;
        }
      }
    }
    if (cols > start) AQ.middleCols(start, cols - start) = apply(Q.middleCols(start, cols - start));
  };

  expand(gaussian_block(n, block, mix_seed({0x6b72796c6f76ULL, 0xfeedULL})));

  for (int expansion = 0;; ++expansion) {
    Matrix T = Q.leftCols(cols).transpose() * AQ.leftCols(cols);
    T = (0.5 * (T + T.transpose())).eval();
    SpectralPair ritz = eig_sym_full(T);
    sort_descending(ritz, order);

    const Index nb = std::min(cols, block);
    const Matrix Y = ritz.vectors.leftCols(nb);
    const Matrix X = Q.leftCols(cols) * Y;
    const Matrix AX = AQ.leftCols(cols) * Y;
    Matrix residual = AX - X * ritz.values.head(nb).asDiagonal();

    const double scale = ritz.values.cwiseAbs().maxCoeff();
    const double tol = 1e-10 * (scale + 1.0);
    bool converged = cols >= k;
    for (Index j = 0; converged && j < k; ++j) converged = residual.col(j).norm() <= tol;
    if (converged || cols == n) {
      SpectralPair out{ritz.values.head(k), X.leftCols(k)};
      return out;
    }
    if (expansion >= kMaxExpansions)
      throw Error(Errc::no_convergence, "block Krylov eigensolver exceeded its iteration budget");

    if (cols + nb > cap) {
      const Index keep = std::min(cols, 2 * block);
      const Matrix Yk = ritz.vectors.leftCols(keep);
      Matrix Qk = Q.leftCols(cols) * Yk;
      Matrix AQk = AQ.leftCols(cols) * Yk;
      // Restarted basis is re-orthonormalized implicitly: Y has orthonormal columns.
      Q.leftCols(keep) = Qk;
      AQ.leftCols(keep) = AQk;
      cols = keep;
    }
    expand(residual);
  }
}

}  // namespace detail

/// The k extreme eigenpairs (per `order`) of a symmetric operator given only
/// through block products `apply(X) = M X`.
template <class Apply>
SpectralPair eig_sym_top_op(Index n, Index k, Apply&& apply, Order order = Order::algebraic) {
  require(n >= 1, Errc::invalid_argument, "operator dimension must be positive");
  require(k >= 1 && k <= n, Errc::out_of_range, "requested eigenpair count out of range");
  SpectralPair sp;
  if (n <= 64 || 3 * k >= n) {
    Matrix M = apply(Matrix::Identity(n, n));
    M = (0.5 * (M + M.transpose())).eval();
    sp = detail::select_top(eig_sym_full(M), k, order);
  } else {
    sp = detail::krylov_top(n, k, apply, order);
  }
  fix_signs(sp.vectors);
  return sp;
}

/// k algebraically largest (or largest-modulus) eigenpairs of symmetric M.
inline SpectralPair eig_sym_top(const Matrix& M, Index k, Order order = Order::algebraic) {
  require_finite(M, "eig_sym_top input");
  require(M.rows() == M.cols(), Errc::shape_mismatch, "eig_sym_top needs a square matrix");
  require(is_symmetric(M), Errc::non_symmetric, "eig_sym_top input is not symmetric");
  require(k >= 1 && k <= M.rows(), Errc::out_of_range, "eig_sym_top: k out of range");
  const Index n = M.rows();
  if (n <= 64 || 3 * k >= n) {
    SpectralPair sp = detail::select_top(eig_sym_full(M), k, order);
    fix_signs(sp.vectors);
    return sp;
  }
  return eig_sym_top_op(n, k, [&M](const Matrix& X) -> Matrix { return M * X; }, order);
}

namespace detail {

/// Replaces columns [good, cols) of B by an orthonormal completion of the
/// span of the first `good` columns.
inline void complete_basis(Matrix& B, Index good, std::uint64_t seed) {
  Index filled = good;
  std::uint64_t draw = 0;
  while (filled < B.cols()) {
    Vector w = gaussian_block(B.rows(), 1, mix_seed({seed, draw++})).col(0);
    if (append_orthonormal(B, filled, w)) ++filled;
    require(draw < 1000, Errc::degenerate, "cannot complete orthonormal basis");
  }
}

}  // namespace detail

/// Leading k singular triplets of M, via the k largest eigenpairs of the
/// Hermitian dilation [[0, M], [M^T, 0]].
inline SvdPair svd_top(const Matrix& M, Index k) {
  require_finite(M, "svd_top input");
  const Index r = M.rows();
  const Index c = M.cols();
  require(k >= 1 && k <= std::min(r, c), Errc::out_of_range, "svd_top: k out of range");
  const Index N = r + c;
  auto dilation = [&M, r, c, N](const Matrix& X) -> Matrix {
    Matrix Y(N, X.cols());
    Y.topRows(r).noalias() = M * X.bottomRows(c);
    Y.bottomRows(c).noalias() = M.transpose() * X.topRows(r);
    return Y;
  };
  SpectralPair e = eig_sym_top_op(N, k, dilation, Order::algebraic);

  SvdPair out;
  out.left.values = e.values.cwiseMax(0.0);
  out.right.values = out.left.values;
  Matrix U = std::sqrt(2.0) * e.vectors.topRows(r);
  Matrix V = std::sqrt(2.0) * e.vectors.bottomRows(c);
  const double smax = std::max(out.left.values(0), 0.0);
  const double zero_tol = 1e-12 * std::max(smax, 1.0);
  Index good = 0;
  while (good < k && out.left.values(good) > zero_tol) ++good;
  for (Index j = 0; j < good; ++j) {
    U.col(j).normalize();
    V.col(j).normalize();
  }
  if (good < k) {
    // Null singular directions: the dilation does not pair them up, so any
    // orthonormal completion is a valid choice.
    detail::complete_basis(U, good, 0x55ULL);
    detail::complete_basis(V, good, 0x56ULL);
  }
  fix_signs(U, &V);
  out.left.vectors = std::move(U);
  out.right.vectors = std::move(V);
  return out;
}

inline double spectral_norm(const Matrix& M) { return svd_top(M, 1).left.values(0); }

/// Orthogonal O minimizing ||X O - Y||_F: O = P Q^T where X^T Y = P S Q^T.
inline Matrix procrustes_align(const Matrix& X, const Matrix& Y) {
  require(X.rows() == Y.rows() && X.cols() == Y.cols(), Errc::shape_mismatch,
          "procrustes_align: X and Y must have equal shapes");
  require_finite(X, "procrustes X");
  require_finite(Y, "procrustes Y");
  const Matrix C = X.transpose() * Y;
  const SvdPair s = svd_top(C, C.cols());
  require(s.left.values(C.cols() - 1) > 1e-12, Errc::rank_deficient,
          "procrustes_align: X^T Y is rank deficient, alignment undefined");
  return s.left.vectors * s.right.vectors.transpose();
}

/// Spectral norm of (I - X X^T) Y for orthonormal-column X, Y.
inline double sin_theta(const Matrix& X, const Matrix& Y) {
  require(X.rows() == Y.rows(), Errc::shape_mismatch, "sin_theta: row counts differ");
  require(is_orthonormal(X) && is_orthonormal(Y), Errc::not_orthonormal,
          "sin_theta needs orthonormal columns");
  const Matrix Z = Y - X * (X.transpose() * Y);
  const Matrix G = Z.transpose() * Z;
  const double top = eig_sym_full(0.5 * (G + G.transpose())).values(0);
  return std::clamp(std::sqrt(std::max(top, 0.0)), 0.0, 1.0);
}

/// Maximum row l2 norm.
inline double two_to_inf_norm(const Matrix& M) {
  return M.rows() == 0 ? 0.0 : M.rowwise().norm().maxCoeff();
}

inline Matrix kron(const Matrix& A, const Matrix& B) {
  Matrix K(A.rows() * B.rows(), A.cols() * B.cols());
  for (Index i = 0; i < A.rows(); ++i)
    for (Index j = 0; j < A.cols(); ++j)
      K.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
  return K;
}

/// Column-stacking vectorization.
inline Vector vec(const Matrix& M) { return Eigen::Map<const Vector>(M.data(), M.size()); }

inline Matrix unvec(const Vector& v, Index rows, Index cols) {
  require(v.size() == rows * cols, Errc::shape_mismatch, "unvec: size mismatch");
  return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

inline Index vech_size(Index n) { return n * (n + 1) / 2; }

/// Position of entry (i, j), i >= j, inside vech of an n x n matrix.
inline Index vech_index(Index n, Index i, Index j) { return j * n - j * (j - 1) / 2 + (i - j); }

/// Half-vectorization: the on-and-below-diagonal part, column by column.
inline Vector vech(const Matrix& M) {
  require(M.rows() == M.cols(), Errc::shape_mismatch, "vech needs a square matrix");
  require(is_symmetric(M), Errc::non_symmetric, "vech needs a symmetric matrix");
  const Index n = M.rows();
  Vector v(vech_size(n));
  for (Index j = 0; j < n; ++j)
    for (Index i = j; i < n; ++i) v(vech_index(n, i, j)) = M(i, j);
  return v;
}

/// Duplication matrix D_n with D_n vech(M) = vec(M) for symmetric M.
inline Matrix duplication(Index n) {
  require(n >= 1, Errc::invalid_argument, "duplication: n must be positive");
  Matrix D = Matrix::Zero(n * n, vech_size(n));
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) D(i + j * n, vech_index(n, std::max(i, j), std::min(i, j))) = 1.0;
  return D;
}

/// Elimination matrix L_d with L_d vec(M) = vech(M).
inline Matrix elimination(Index d) {
  require(d >= 1, Errc::invalid_argument, "elimination: d must be positive");
  Matrix L = Matrix::Zero(vech_size(d), d * d);
  for (Index j = 0; j < d; ++j)
    for (Index i = j; i < d; ++i) L(vech_index(d, i, j), i + j * d) = 1.0;
  return L;
}

/// Commutation matrix K with K vec(M) = vec(M^T) for d x d M.
inline Matrix commutation(Index d) {
  Matrix K = Matrix::Zero(d * d, d * d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) K(j + i * d, i + j * d) = 1.0;
  return K;
}

/// Spectral factorization of a symmetric positive (semi)definite matrix,
/// used for solves with condition monitoring.
class SymmetricFactor {
 public:
  explicit SymmetricFactor(const Matrix& S) : eig_(eig_sym_full(0.5 * (S + S.transpose()))) {
    const double hi = eig_.values(0);
    const double lo = eig_.values(eig_.values.size() - 1);
    condition_ = (lo > 0.0 && hi > 0.0) ? hi / lo : std::numeric_limits<double>::infinity();
  }

  double condition() const { return condition_; }
  double min_eigenvalue() const { return eig_.values(eig_.values.size() - 1); }
  double max_eigenvalue() const { return eig_.values(0); }
  const SpectralPair& eigen() const { return eig_; }

  Vector solve(const Vector& b) const {
    const Vector c = eig_.vectors.transpose() * b;
    return eig_.vectors * c.cwiseQuotient(eig_.values);
  }

  Matrix inverse_sqrt() const {
    return eig_.vectors * eig_.values.cwiseSqrt().cwiseInverse().asDiagonal() *
           eig_.vectors.transpose();
  }

 private:
  SpectralPair eig_;
  double condition_;
};

/// Inverse of a small square matrix; throws if sigma_min <= 1e-12.
inline Matrix checked_inverse(const Matrix& R, const char* what) {
  require(R.rows() == R.cols(), Errc::shape_mismatch, std::string(what) + " must be square");
  const SvdPair s = svd_top(R, R.cols());
  require(s.left.values(R.cols() - 1) > 1e-12, Errc::singular, std::string(what) + " is singular");
  return s.right.vectors * s.left.values.cwiseInverse().asDiagonal() * s.left.vectors.transpose();
}

}  // namespace linalg
}  // namespace cosie

#endif  // COSIE_LINALG_HPP
