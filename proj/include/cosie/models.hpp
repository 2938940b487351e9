#ifndef COSIE_MODELS_HPP
#define COSIE_MODELS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cosie/error.hpp"
#include "cosie/linalg.hpp"
#include "cosie/rng.hpp"

namespace cosie {

/// Edge-probability model P(i) = U R(i) V^T shared by all layers.
struct CosieModel {
  Matrix U;
  Matrix V;
  std::vector<Matrix> R;
  bool directed = true;

  Index n() const { return U.rows(); }
  Index d() const { return U.cols(); }
  Index m() const { return static_cast<Index>(R.size()); }

  Matrix P(Index i) const { return U * R.at(static_cast<std::size_t>(i)) * V.transpose(); }

  void validate() const {
    require(m() >= 1, Errc::invalid_argument, "model needs at least one layer");
    linalg::require_finite(U, "U");
    linalg::require_finite(V, "V");
    require(V.rows() == U.rows() && V.cols() == U.cols(), Errc::shape_mismatch, "U and V shapes differ");
    require(linalg::orthonormality_error(U) <= 1e-10, Errc::not_orthonormal, "U^T U != I");
    require(linalg::orthonormality_error(V) <= 1e-10, Errc::not_orthonormal, "V^T V != I");
    if (!directed)
      require(linalg::max_abs(U - V) <= 1e-12, Errc::invalid_argument, "undirected model needs V = U");
    for (Index i = 0; i < m(); ++i) {
      const Matrix& Ri = R[static_cast<std::size_t>(i)];
      require(Ri.rows() == d() && Ri.cols() == d(), Errc::shape_mismatch, "R(i) must be d x d");
      linalg::require_finite(Ri, "R(i)");
      if (!directed) require(linalg::is_symmetric(Ri, 1e-12), Errc::non_symmetric, "undirected R(i) not symmetric");
      const Matrix Pi = P(i);
      require(Pi.minCoeff() >= -1e-10 && Pi.maxCoeff() <= 1.0 + 1e-10, Errc::out_of_range,
              "P(" + std::to_string(i) + ") has entries outside [0,1]");
    }
  }
};

/// m binary adjacency matrices (stored as doubles for direct use in products).
struct GraphSample {
  std::vector<Matrix> A;
  bool directed = true;

  Index m() const { return static_cast<Index>(A.size()); }
  Index n() const { return A.empty() ? 0 : A.front().rows(); }

  void validate() const {
    require(!A.empty(), Errc::invalid_argument, "empty graph sample");
    for (const Matrix& a : A) {
      require(a.rows() == n() && a.cols() == n(), Errc::shape_mismatch, "adjacency matrices must be n x n");
      require((a.array() == 0.0 || a.array() == 1.0).all(), Errc::invalid_argument, "adjacency must be binary");
      if (!directed) require(a == a.transpose(), Errc::non_symmetric, "undirected adjacency not symmetric");
    }
  }
};

/// Multi-layer stochastic block model. `phi` empty means phi = tau.
struct SbmSpec {
  std::vector<int> tau;
  std::vector<int> phi;
  std::vector<Matrix> B;
  bool directed = true;

  Index blocks() const { return B.empty() ? 0 : B.front().rows(); }
  const std::vector<int>& col_labels() const { return phi.empty() ? tau : phi; }
};

namespace detail {

inline Matrix membership_matrix(const std::vector<int>& labels, Index K) {
  Matrix Z = Matrix::Zero(static_cast<Index>(labels.size()), K);
  for (std::size_t s = 0; s < labels.size(); ++s) {
    require(labels[s] >= 0 && labels[s] < K, Errc::out_of_range, "membership label out of range");
    Z(static_cast<Index>(s), labels[s]) = 1.0;
  }
  return Z;
}

inline Vector block_sizes(const std::vector<int>& labels, Index K) {
  Vector c = Vector::Zero(K);
  for (int l : labels) c(l) += 1.0;
  require((c.array() > 0.0).all(), Errc::degenerate, "SBM block is empty");
  return c;
}

}  // namespace detail

inline CosieModel sbm_to_cosie(const SbmSpec& spec) {
  const Index K = spec.blocks();
  require(K >= 1 && !spec.B.empty(), Errc::invalid_argument, "SBM needs at least one B matrix");
  require(!spec.tau.empty(), Errc::invalid_argument, "SBM memberships are empty");
  const auto& phi = spec.col_labels();
  require(phi.size() == spec.tau.size(), Errc::shape_mismatch, "tau and phi lengths differ");
  for (const Matrix& b : spec.B) {
    require(b.rows() == K && b.cols() == K, Errc::shape_mismatch, "every B must be K x K");
    require(b.allFinite() && b.minCoeff() >= 0.0 && b.maxCoeff() <= 1.0, Errc::out_of_range,
            "B entries must lie in [0,1]");
  }
  const Vector nt = detail::block_sizes(spec.tau, K);
  const Vector np = detail::block_sizes(phi, K);

  CosieModel model;
  model.directed = spec.directed;
  model.U = detail::membership_matrix(spec.tau, K) * nt.cwiseSqrt().cwiseInverse().asDiagonal();
  model.V = detail::membership_matrix(phi, K) * np.cwiseSqrt().cwiseInverse().asDiagonal();
  for (const Matrix& b : spec.B)
    model.R.push_back(nt.cwiseSqrt().asDiagonal() * b * np.cwiseSqrt().asDiagonal());
  if (!spec.directed) {
    require(spec.phi.empty() || spec.phi == spec.tau, Errc::invalid_argument, "undirected SBM needs phi = tau");
    for (Matrix& r : model.R) r = (0.5 * (r + r.transpose())).eval();
  }
  model.validate();
  return model;
}

/// iid uniform labels in [0, K), redrawn until every block is occupied.
inline std::vector<int> random_memberships(Index n, Index K, Stream& rng) {
  require(K >= 1 && K <= n, Errc::invalid_argument, "need 1 <= K <= n");
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::vector<int> labels(static_cast<std::size_t>(n));
    std::vector<int> count(static_cast<std::size_t>(K), 0);
    for (auto& l : labels) {
      l = static_cast<int>(rng.below(static_cast<std::uint64_t>(K)));
      ++count[static_cast<std::size_t>(l)];
    }
    if (std::find(count.begin(), count.end(), 0) == count.end()) return labels;
  }
  throw Error(Errc::degenerate, "could not draw memberships with every block occupied");
}

/// K x K matrix with iid U(0,1) entries (symmetrized when `symmetric`).
inline Matrix uniform_block_matrix(Index K, Stream& rng, bool symmetric = false) {
  Matrix B(K, K);
  for (Index j = 0; j < K; ++j)
    for (Index i = 0; i < K; ++i) B(i, j) = rng.uniform();
  if (symmetric)
    for (Index j = 0; j < K; ++j)
      for (Index i = 0; i < j; ++i) B(i, j) = B(j, i);
  return B;
}

/// Independent Bernoulli(P(i)) draws; layer i uses substream i of `rng`.
inline GraphSample sample_cosie(const CosieModel& model, const Stream& rng) {
  const Index n = model.n();
  GraphSample g;
  g.directed = model.directed;
  g.A.reserve(static_cast<std::size_t>(model.m()));
  for (Index i = 0; i < model.m(); ++i) {
    Stream s = rng.substream(static_cast<std::uint64_t>(i));
    const Matrix P = model.P(i);
    Matrix A(n, n);
    if (model.directed) {
      for (Index t = 0; t < n; ++t)
        for (Index r = 0; r < n; ++r) A(r, t) = s.uniform() < P(r, t) ? 1.0 : 0.0;
    } else {
      for (Index t = 0; t < n; ++t)
        for (Index r = 0; r <= t; ++r) {
          const double a = s.uniform() < P(r, t) ? 1.0 : 0.0;
          A(r, t) = a;
          A(t, r) = a;
        }
    }
    g.A.push_back(std::move(A));
  }
  return g;
}

/// Symmetric Gaussian-noise layers around F + G(i), F = Xc Xc^T, G(i) = Xs(i) Xs(i)^T.
struct MultinessModel {
  Matrix Xc;
  std::vector<Matrix> Xs;
  double sigma = 1.0;

  Index n() const { return Xc.rows(); }
  Index m() const { return static_cast<Index>(Xs.size()); }
  Matrix F() const { return Xc * Xc.transpose(); }
  Matrix G(Index i) const {
    const Matrix& X = Xs.at(static_cast<std::size_t>(i));
    return X * X.transpose();
  }
  Matrix P(Index i) const { return F() + G(i); }
};

/// Latent positions with iid N(0,1) entries.
inline MultinessModel random_multiness(Index n, Index m, Index d1, Index d2, double sigma, Stream& rng) {
  require(n >= 1 && m >= 1 && d1 >= 0 && d2 >= 0 && d1 + d2 <= n, Errc::invalid_argument,
          "invalid MultiNeSS dimensions");
  require(sigma >= 0.0, Errc::invalid_argument, "sigma must be non-negative");
  auto gaussian = [&rng](Index r, Index c) {
    Matrix X(r, c);
    for (Index j = 0; j < c; ++j)
      for (Index i = 0; i < r; ++i) X(i, j) = rng.normal();
    return X;
  };
  MultinessModel model;
  model.sigma = sigma;
  model.Xc = gaussian(n, d1);
  for (Index i = 0; i < m; ++i) model.Xs.push_back(gaussian(n, d2));
  return model;
}

inline std::vector<Matrix> sample_multiness(const MultinessModel& model, const Stream& rng) {
  const Index n = model.n();
  std::vector<Matrix> out;
  for (Index i = 0; i < model.m(); ++i) {
    Stream s = rng.substream(static_cast<std::uint64_t>(i));
    Matrix A = model.P(i);
    if (model.sigma > 0.0) {
      for (Index t = 0; t < n; ++t)
        for (Index r = 0; r <= t; ++r) {
          const double e = model.sigma * s.normal();
          A(r, t) += e;
          if (r != t) A(t, r) += e;
        }
    }
    out.push_back(std::move(A));
  }
  return out;
}

/// Sigma = U Lambda U^T + sigma2 (I - U U^T), optionally shifted by `mean`.
struct SpikedModel {
  Matrix U;
  Vector lambda;
  double sigma2 = 1.0;
  Vector mean;  // empty = zero mean

  Index D() const { return U.rows(); }
  Index d() const { return U.cols(); }

  void validate() const {
    linalg::require_finite(U, "U");
    require(linalg::orthonormality_error(U) <= 1e-10, Errc::not_orthonormal, "spiked U^T U != I");
    require(lambda.size() == d(), Errc::shape_mismatch, "lambda length must equal d");
    require(sigma2 > 0.0, Errc::domain, "sigma^2 must be positive");
    for (Index j = 0; j < d(); ++j) {
      require(std::isfinite(lambda(j)), Errc::non_finite, "lambda is not finite");
      require(j == 0 || lambda(j) <= lambda(j - 1), Errc::invalid_argument, "lambda must be non-increasing");
    }
    require(lambda(d() - 1) > sigma2, Errc::domain, "smallest spike must exceed sigma^2");
    require(mean.size() == 0 || mean.size() == D(), Errc::shape_mismatch, "mean length must equal D");
  }

  Matrix Sigma() const {
    return U * lambda.asDiagonal() * U.transpose() +
           sigma2 * (Matrix::Identity(D(), D()) - U * U.transpose());
  }

  double trace() const { return lambda.sum() + static_cast<double>(D() - d()) * sigma2; }
  double effective_rank() const { return trace() / lambda(0); }
};

/// D x d matrix uniform on the Stiefel manifold (Gram-Schmidt of a Gaussian).
inline Matrix haar_orthonormal(Index D, Index d, Stream& rng) {
  require(d >= 1 && d <= D, Errc::invalid_argument, "need 1 <= d <= D");
  Matrix Q(D, d);
  Index filled = 0;
  while (filled < d) {
    Vector g(D);
    for (Index i = 0; i < D; ++i) g(i) = rng.normal();
    if (linalg::detail::append_orthonormal(Q, filled, g)) ++filled;
  }
  return Q;
}

/// m nodes of n columns each, X = mean + U (Lambda - sigma2 I)^{1/2} F + sigma Z.
inline std::vector<Matrix> sample_spiked(const SpikedModel& model, Index n, Index m, bool demean,
                                         const Stream& rng) {
  model.validate();
  require(n >= 1 && m >= 1, Errc::invalid_argument, "need n, m >= 1");
  require(!demean || n >= model.d() + 1, Errc::insufficient_samples, "demeaning needs n >= d + 1");
  const Index D = model.D();
  const Index d = model.d();
  const Vector scale = (model.lambda.array() - model.sigma2).sqrt().matrix();
  const double sigma = std::sqrt(model.sigma2);
  std::vector<Matrix> out;
  for (Index i = 0; i < m; ++i) {
    Stream s = rng.substream(static_cast<std::uint64_t>(i));
    Matrix F(d, n);
    Matrix Z(D, n);
    for (Index j = 0; j < n; ++j) {
      for (Index k = 0; k < d; ++k) F(k, j) = s.normal();
      for (Index k = 0; k < D; ++k) Z(k, j) = s.normal();
    }
    Matrix X = model.U * (scale.asDiagonal() * F) + sigma * Z;
    if (model.mean.size() == D) X.colwise() += model.mean;
    out.push_back(std::move(X));
  }
  return out;
}

}  // namespace cosie

#endif  // COSIE_MODELS_HPP
