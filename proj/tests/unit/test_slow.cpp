#include <gtest/gtest.h>

#include "cosie/harness.hpp"

using namespace cosie;
using namespace cosie::harness;

TEST(SlowSelectDims, RecoversBlockCount) {
  Stream ls(11);
  SbmSpec spec;
  spec.directed = false;
  spec.tau = random_memberships(1000, 3, ls);
  spec.B.assign(3, planted_B(3, 0.5, 0.1));
  const CosieModel model = sbm_to_cosie(spec);
  int hits = 0;
  for (Index r = 0; r < 100; ++r) hits += select_block_dims(sample_cosie(model, Stream(mix_seed({5, static_cast<std::uint64_t>(r)})))).d == 3;
  EXPECT_GE(hits, 95);
}

TEST(SlowMultiness, CommonSubspaceRecovered) {
  int hits = 0;
  for (Index r = 0; r < 100; ++r) {
    Stream s(mix_seed({6, static_cast<std::uint64_t>(r)}));
    Stream latent = s.substream(0);
    const MultinessModel model = random_multiness(400, 8, 2, 2, 1.0, latent);
    const MultinessEstimate est = estimate_multiness(sample_multiness(model, s.substream(1)), 2, 2);
    hits += linalg::sin_theta(est.Uc, linalg::svd_top(model.Xc, 2).left.vectors) < 0.2;
  }
  EXPECT_GE(hits, 90);
}

TEST(SlowMultiSample, NullMeanMatchesDegreesOfFreedom) {
  ExperimentConfig c;
  c.n = 800;
  c.m = 3;
  const SbmSpec spec = cosie_design(c, 12, c.n, 3, false);
  SbmSpec tied = spec;
  tied.B[1] = tied.B[2] = tied.B[0];
  const CosieModel model = sbm_to_cosie(tied);
  const auto T = run_replicates(300, 1, [&](Index r) {
    const SubspaceEstimate est = estimate_cosie(sample_cosie(model, Stream(mix_seed({7, static_cast<std::uint64_t>(r)}))), {3, 3, 3}, 3);
    return multi_sample_test(est).statistic;
  });
  double mean = 0.0;
  for (double t : T) mean += t / 300.0;
  EXPECT_NEAR(mean, 18.0, 1.8);
}

TEST(SlowMultiness, SharedErrorFallsWithN) {
  ExperimentConfig c;
  c.kind = "multiness";
  c.sweep_param = "n";
  c.sweep = {200, 400, 600};
  c.m = 8;
  c.replicates = 20;
  const CalibrationReport r = run_study(c);
  EXPECT_LT(r.get("ErrF_mean_n_400"), r.get("ErrF_mean_n_200"));
  EXPECT_LT(r.get("ErrF_mean_n_600"), r.get("ErrF_mean_n_400"));
}
