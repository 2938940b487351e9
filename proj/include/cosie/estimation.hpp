#ifndef COSIE_ESTIMATION_HPP
#define COSIE_ESTIMATION_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cosie/error.hpp"
#include "cosie/linalg.hpp"
#include "cosie/models.hpp"
#include "cosie/rng.hpp"

namespace cosie {

struct SubspaceEstimate {
  Matrix Uhat;
  Matrix Vhat;
  std::vector<Matrix> Rhat;
  std::vector<Index> dims;
  bool directed = true;
  std::vector<Matrix> Ulocal;
  std::vector<Matrix> Vlocal;
  std::optional<Matrix> W_U;  // Procrustes alignment Uhat -> U
  std::optional<Matrix> W_V;

  Index n() const { return Uhat.rows(); }
  Index d() const { return Uhat.cols(); }
  Index m() const { return static_cast<Index>(Rhat.size()); }
  Matrix Phat(Index i) const { return Uhat * Rhat.at(static_cast<std::size_t>(i)) * Vhat.transpose(); }
};

struct DimSelection {
  std::vector<Index> dims;
  Index d = 0;
};

namespace detail {

/// Number of |eigenvalues| (undirected) or singular values (directed) of A
/// above `threshold`, found by growing a truncated decomposition.
inline Index count_above(const Matrix& A, bool directed, double threshold) {
  const Index n = A.rows();
  Index k = std::min<Index>(n, 8);
  for (;;) {
    Vector vals = directed ? linalg::svd_top(A, k).left.values
                           : linalg::eig_sym_top(A, k, Order::magnitude).values.cwiseAbs();
    const Index c = (vals.array() > threshold).count();
    if (c < k || k == n) return c;
    k = std::min(n, 2 * k);
  }
}

inline std::pair<Matrix, Matrix> local_embedding(const Matrix& A, Index k, bool directed) {
  require(k >= 1 && k <= A.rows(), Errc::out_of_range, "block dimension out of range");
  if (directed) {
    const SvdPair s = linalg::svd_top(A, k);
    return {s.left.vectors, s.right.vectors};
  }
  const SpectralPair e = linalg::eig_sym_top(A, k, Order::magnitude);
  return {e.vectors, e.vectors};
}

inline Matrix hstack(const std::vector<Matrix>& blocks) {
  Index cols = 0;
  for (const Matrix& b : blocks) cols += b.cols();
  Matrix S(blocks.front().rows(), cols);
  Index c = 0;
  for (const Matrix& b : blocks) {
    S.middleCols(c, b.cols()) = b;
    c += b.cols();
  }
  return S;
}

inline std::vector<Index> resolve_dims(const GraphSample& sample, std::vector<Index> dims);

}  // namespace detail

/// Per-layer dimension by the 4 sqrt(max degree) rule, overall d by the mode.
inline DimSelection select_block_dims(const GraphSample& sample) {
  require(sample.m() >= 1 && sample.n() >= 1, Errc::invalid_argument, "empty graph sample");
  DimSelection out;
  std::map<Index, int> freq;
  for (const Matrix& A : sample.A) {
    double delta = A.rowwise().sum().maxCoeff();
    if (sample.directed) delta = std::max(delta, A.colwise().sum().maxCoeff());
    const double threshold = 4.0 * std::sqrt(std::max(delta, 0.0));
    const Index di = delta > 0.0 ? detail::count_above(A, sample.directed, threshold) : 0;
    out.dims.push_back(di);
    ++freq[di];
  }
  require(std::any_of(out.dims.begin(), out.dims.end(), [](Index x) { return x > 0; }), Errc::no_signal,
          "no eigenvalue exceeds 4 sqrt(max degree) in any layer");
  int best = -1;
  for (const auto& [value, count] : freq) {
    if (value > 0 && count > best) {
      best = count;
      out.d = value;
    }
  }
  return out;
}

inline std::vector<Index> detail::resolve_dims(const GraphSample& sample, std::vector<Index> dims) {
  if (dims.empty()) return select_block_dims(sample).dims;
  require(static_cast<Index>(dims.size()) == sample.m(), Errc::shape_mismatch, "need one dimension per layer");
  return dims;
}

/// Joint estimation of the common subspaces and per-layer score matrices.
/// `dims` empty selects per-layer dimensions automatically; `d` = 0 selects d.
inline SubspaceEstimate estimate_cosie(const GraphSample& sample, std::vector<Index> dims = {}, Index d = 0) {
  require(sample.m() >= 1 && sample.n() >= 1, Errc::invalid_argument, "empty graph sample");
  const Index n = sample.n();
  const bool auto_dims = dims.empty();
  if (auto_dims) {
    const DimSelection sel = select_block_dims(sample);
    dims = sel.dims;
    if (d == 0) d = sel.d;
  } else if (d == 0) {
    std::map<Index, int> freq;
    for (Index x : dims) ++freq[x];
    int best = -1;
    for (const auto& [value, count] : freq)
      if (count > best) best = count, d = value;
  }
  require(static_cast<Index>(dims.size()) == sample.m(), Errc::shape_mismatch, "need one dimension per layer");
  for (Index& di : dims) {
    // An auto-selected layer dimension below d is raised to d.
    if (auto_dims) di = std::max(di, d);
    require(di >= d, Errc::out_of_range, "d exceeds a block dimension");
    require(di <= n, Errc::out_of_range, "block dimension exceeds n");
  }
  require(d >= 1 && d <= n, Errc::out_of_range, "d exceeds available rank");

  SubspaceEstimate est;
  est.directed = sample.directed;
  est.dims = dims;
  for (Index i = 0; i < sample.m(); ++i) {
    auto [Ui, Vi] = detail::local_embedding(sample.A[static_cast<std::size_t>(i)], dims[static_cast<std::size_t>(i)],
                                            sample.directed);
    est.Ulocal.push_back(std::move(Ui));
    est.Vlocal.push_back(std::move(Vi));
  }
  const Matrix SU = detail::hstack(est.Ulocal);
  require(d <= SU.cols(), Errc::out_of_range, "d exceeds the stacked dimension");
  est.Uhat = linalg::svd_top(SU, d).left.vectors;
  est.Vhat = sample.directed ? linalg::svd_top(detail::hstack(est.Vlocal), d).left.vectors : est.Uhat;
  for (const Matrix& A : sample.A) est.Rhat.push_back(est.Uhat.transpose() * A * est.Vhat);
  return est;
}

/// Fills W_U, W_V with the Procrustes rotations onto the model's U, V.
inline void align_to(SubspaceEstimate& est, const CosieModel& truth) {
  require(truth.n() == est.n() && truth.d() == est.d(), Errc::shape_mismatch, "truth and estimate shapes differ");
  est.W_U = linalg::procrustes_align(est.Uhat, truth.U);
  est.W_V = linalg::procrustes_align(est.Vhat, truth.V);
}

/// Aligned score error W_U^T Rhat(i) W_V - R(i).
inline Matrix aligned_score_error(const SubspaceEstimate& est, const CosieModel& truth, Index i) {
  require(est.W_U.has_value() && est.W_V.has_value(), Errc::invalid_argument, "estimate is not aligned");
  return est.W_U->transpose() * est.Rhat.at(static_cast<std::size_t>(i)) * *est.W_V -
         truth.R.at(static_cast<std::size_t>(i));
}

struct SharedIndividualEstimate {
  Matrix Uc;
  Matrix Vc;
  std::vector<Matrix> Us;
  std::vector<Matrix> Vs;
  Index d0_U = 0;
  Index d0_V = 0;
  Vector pi_values_U;  // eigenvalues of the projection average
  Vector pi_values_V;
  bool degenerate_residual = false;
  bool no_separation = false;
};

struct SharedSplit {
  Matrix common;
  std::vector<Matrix> individual;
  Vector pi_values;
  bool degenerate_residual = false;
  bool no_separation = false;
};

/// d0 threshold 1 - (n rho)^{-1/2} log n.
inline double shared_dim_threshold(Index n, double rho) {
  require(rho > 0.0 && std::isfinite(rho), Errc::domain, "density estimate must be positive");
  return 1.0 - std::log(static_cast<double>(n)) / std::sqrt(static_cast<double>(n) * rho);
}

/// Splits local bases into a d0-dimensional common part and per-block
/// residual parts. d0 = nullopt selects it by `threshold`.
inline SharedSplit split_shared(const std::vector<Matrix>& locals, std::optional<Index> d0, double threshold) {
  require(!locals.empty(), Errc::invalid_argument, "no local bases");
  const Matrix S = detail::hstack(locals);
  const Index n = S.rows();
  const Index m = static_cast<Index>(locals.size());
  const Index top = std::min(n, S.cols());
  SharedSplit out;
  out.pi_values = linalg::svd_top(S, top).left.values.array().square() / static_cast<double>(m);
  Index k = 0;
  if (d0) {
    k = *d0;
  } else {
    k = (out.pi_values.array() >= threshold).count();
    require(k > 0, Errc::no_signal, "no eigenvalue of the projection average reaches the shared threshold");
  }
  Index dmin = std::numeric_limits<Index>::max();
  for (const Matrix& L : locals) dmin = std::min(dmin, L.cols());
  require(k >= 0 && k <= dmin, Errc::out_of_range, "d0 exceeds the smallest block dimension");
  if (k < top && k > 0) out.no_separation = out.pi_values(k - 1) - out.pi_values(k) <= 1e-8;
  if (m == 1) out.no_separation = true;

  out.common = k > 0 ? Matrix(linalg::svd_top(S, k).left.vectors) : Matrix(n, 0);
  for (const Matrix& L : locals) {
    const Index r = L.cols() - k;
    if (r == 0) {
      out.individual.emplace_back(n, 0);
      continue;
    }
    const Matrix resid = L - out.common * (out.common.transpose() * L);
    const SvdPair sv = linalg::svd_top(resid, r);
    Index good = 0;
    while (good < r && sv.left.values(good) > 1e-8) ++good;
    Matrix Us(n, r);
    if (good == r) {
      Us = sv.left.vectors;
    } else {
      out.degenerate_residual = true;
      Matrix basis(n, k + r);
      basis.leftCols(k) = out.common;
      basis.middleCols(k, good) = sv.left.vectors.leftCols(good);
      Index filled = k + good;
      std::uint64_t draw = 0;
      while (filled < k + r) {
        Vector w = linalg::detail::gaussian_block(n, 1, mix_seed({0x5e5dULL, draw++})).col(0);
        if (linalg::detail::append_orthonormal(basis, filled, w)) ++filled;
      }
      Us = basis.rightCols(r);
    }
    out.individual.push_back(std::move(Us));
  }
  return out;
}

/// Shared and individual subspaces of a graph sample. d0 values are chosen
/// with the plug-in density when not supplied.
inline SharedIndividualEstimate estimate_shared_individual(const GraphSample& sample, std::vector<Index> dims = {},
                                                           std::optional<Index> d0_U = std::nullopt,
                                                           std::optional<Index> d0_V = std::nullopt) {
  require(sample.m() >= 1 && sample.n() >= 1, Errc::invalid_argument, "empty graph sample");
  dims = detail::resolve_dims(sample, std::move(dims));
  const Index n = sample.n();
  double total = 0.0;
  for (const Matrix& A : sample.A) total += A.sum();
  const double rho = total / (static_cast<double>(sample.m()) * static_cast<double>(n) * static_cast<double>(n));
  const double threshold = (d0_U && d0_V) ? 1.0 : shared_dim_threshold(n, rho);

  std::vector<Matrix> Ul, Vl;
  for (Index i = 0; i < sample.m(); ++i) {
    auto [Ui, Vi] = detail::local_embedding(sample.A[static_cast<std::size_t>(i)], dims[static_cast<std::size_t>(i)],
                                            sample.directed);
    Ul.push_back(std::move(Ui));
    Vl.push_back(std::move(Vi));
  }
  SharedIndividualEstimate est;
  SharedSplit su = split_shared(Ul, d0_U, threshold);
  est.Uc = std::move(su.common);
  est.Us = std::move(su.individual);
  est.d0_U = est.Uc.cols();
  est.pi_values_U = std::move(su.pi_values);
  est.degenerate_residual = su.degenerate_residual;
  est.no_separation = su.no_separation;
  if (sample.directed) {
    SharedSplit sv = split_shared(Vl, d0_V, threshold);
    est.Vc = std::move(sv.common);
    est.Vs = std::move(sv.individual);
    est.d0_V = est.Vc.cols();
    est.pi_values_V = std::move(sv.pi_values);
    est.degenerate_residual = est.degenerate_residual || sv.degenerate_residual;
    est.no_separation = est.no_separation || sv.no_separation;
  } else {
    est.Vc = est.Uc;
    est.Vs = est.Us;
    est.d0_V = est.d0_U;
    est.pi_values_V = est.pi_values_U;
  }
  return est;
}

// ---- community recovery ----

namespace detail {

struct KmeansRun {
  std::vector<int> labels;
  double inertia = std::numeric_limits<double>::infinity();
};

inline KmeansRun kmeans_once(const Matrix& X, Index K, Stream rng) {
  const Index n = X.rows();
  Matrix C(K, X.cols());
  Vector dist = Vector::Constant(n, std::numeric_limits<double>::infinity());
  std::vector<char> chosen(static_cast<std::size_t>(n), 0);
  Index first = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
  C.row(0) = X.row(first);
  chosen[static_cast<std::size_t>(first)] = 1;
  for (Index c = 1; c < K; ++c) {
    for (Index s = 0; s < n; ++s) dist(s) = std::min(dist(s), (X.row(s) - C.row(c - 1)).squaredNorm());
    const double total = dist.sum();
    Index pick = -1;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      for (Index s = 0; s < n; ++s) {
        u -= dist(s);
        if (u <= 0.0 && dist(s) > 0.0) {
          pick = s;
          break;
        }
      }
      if (pick < 0)
        for (Index s = n - 1; s >= 0 && pick < 0; --s)
          if (dist(s) > 0.0) pick = s;
    } else {
      for (Index s = 0; s < n && pick < 0; ++s)
        if (!chosen[static_cast<std::size_t>(s)]) pick = s;
    }
    C.row(c) = X.row(pick);
    chosen[static_cast<std::size_t>(pick)] = 1;
  }

  KmeansRun run;
  run.labels.assign(static_cast<std::size_t>(n), -1);
  for (int iter = 0; iter < 300; ++iter) {
    bool changed = false;
    double inertia = 0.0;
    for (Index s = 0; s < n; ++s) {
      Index best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (Index c = 0; c < K; ++c) {
        const double dd = (X.row(s) - C.row(c)).squaredNorm();
        if (dd < bd) bd = dd, best = c;
      }
      inertia += bd;
      if (run.labels[static_cast<std::size_t>(s)] != best) {
        run.labels[static_cast<std::size_t>(s)] = static_cast<int>(best);
        changed = true;
      }
    }
    run.inertia = inertia;
    if (!changed) break;
    Matrix sum = Matrix::Zero(K, X.cols());
    Vector count = Vector::Zero(K);
    for (Index s = 0; s < n; ++s) {
      sum.row(run.labels[static_cast<std::size_t>(s)]) += X.row(s);
      count(run.labels[static_cast<std::size_t>(s)]) += 1.0;
    }
    for (Index c = 0; c < K; ++c)
      if (count(c) > 0.0) C.row(c) = sum.row(c) / count(c);
  }
  return run;
}

/// Hungarian algorithm (shortest augmenting path), minimizing total cost of
/// a square assignment. Returns the column assigned to each row.
inline std::vector<int> hungarian(const Matrix& cost) {
  const int n = static_cast<int>(cost.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) minv[j] = cur, way[j] = j0;
        if (minv[j] < delta) delta = minv[j], j1 = j;
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> assign(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] > 0) assign[p[j] - 1] = j - 1;
  return assign;
}

}  // namespace detail

/// K-means on the rows of Uhat, best of `restarts` k-means++ starts.
inline std::vector<int> recover_communities(const Matrix& Uhat, Index K, std::uint64_t seed = 0,
                                            int restarts = 20) {
  require(K >= 2, Errc::invalid_argument, "need K >= 2 communities");
  require(K <= Uhat.rows(), Errc::out_of_range, "K exceeds the number of rows");
  linalg::require_finite(Uhat, "embedding");
  detail::KmeansRun best;
  for (int r = 0; r < restarts; ++r) {
    detail::KmeansRun run = detail::kmeans_once(Uhat, K, Stream(mix_seed({seed, 0x6b6dULL, static_cast<std::uint64_t>(r)})));
    if (run.inertia < best.inertia) best = std::move(run);
  }
  return best.labels;
}

/// Fraction of misassigned labels, minimized over relabelings.
inline double misclassification_rate(const std::vector<int>& labels, const std::vector<int>& truth) {
  require(labels.size() == truth.size() && !labels.empty(), Errc::shape_mismatch, "label vectors differ in length");
  int K = 0;
  for (std::size_t s = 0; s < labels.size(); ++s) {
    require(labels[s] >= 0 && truth[s] >= 0, Errc::out_of_range, "negative label");
    K = std::max({K, labels[s] + 1, truth[s] + 1});
  }
  Matrix agree = Matrix::Zero(K, K);
  for (std::size_t s = 0; s < labels.size(); ++s) agree(labels[s], truth[s]) += 1.0;
  const std::vector<int> assign = detail::hungarian(-agree);
  double hit = 0.0;
  for (int a = 0; a < K; ++a) hit += agree(a, assign[static_cast<std::size_t>(a)]);
  return 1.0 - hit / static_cast<double>(labels.size());
}

}  // namespace cosie

#endif  // COSIE_ESTIMATION_HPP
