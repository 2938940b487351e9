// Distributed PCA on a spiked covariance: error against the number of nodes,
// and one row's spread compared with sigma^2/N Lambda^{-1}.
#include <cstdio>

#include "cosie/cosie.hpp"

using namespace cosie;

int main() {
  Stream rng(3);
  SpikedModel model;
  model.U = haar_orthonormal(100, 2, rng);
  model.lambda = Vector::Constant(2, 1.0);
  model.lambda << 30.0, 15.0;
  model.sigma2 = 1.0;

  for (Index m : {1, 2, 4, 8, 16}) {
    double err = 0.0;
    const int reps = 20;
    for (int r = 0; r < reps; ++r) {
      const auto nodes = sample_spiked(model, 200, m, false, rng.substream(100 * static_cast<std::uint64_t>(m) + r));
      err += dpca_errors(distributed_pca(nodes, 2), model.U).procrustes_frobenius / reps;
    }
    std::printf("m = %2ld  mean ||UW - U||_F = %.4f\n", static_cast<long>(m), err);
  }

  const Index m = 8, n = 200;
  const int reps = 300;
  std::vector<Vector> rows;
  for (int r = 0; r < reps; ++r) {
    const auto nodes = sample_spiked(model, n, m, false, rng.substream(5000 + static_cast<std::uint64_t>(r)));
    const DpcaEstimate est = distributed_pca(nodes, 2);
    const Matrix W = linalg::procrustes_align(est.Uhat, model.U);
    rows.push_back(W.transpose() * est.Uhat.row(0).transpose() - model.U.row(0).transpose());
  }
  const Matrix S = harness::sample_covariance(rows);
  const Matrix Y = dpca_row_covariance(model, m * n);
  std::printf("row 0 variance: empirical (%.3g, %.3g), limit (%.3g, %.3g)\n", S(0, 0), S(1, 1), Y(0, 0), Y(1, 1));
  return 0;
}
