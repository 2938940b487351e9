#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cosie/cosie.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cosie;

namespace {

harness::ExperimentConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  try {
    return harness::ExperimentConfig::from_json(json::parse(io::read_text(path)));
  } catch (const json::parse_error& e) {
    throw Error(Errc::io, path + ": " + e.what());
  }
}

GraphSample load_graphs(const std::string& edges, const std::vector<std::string>& dense, Index n, Index m,
                        bool undirected) {
  GraphSample g;
  if (!edges.empty()) {
    require(n > 0 && m > 0, Errc::invalid_argument, "--edges needs --n and --m");
    g = io::read_edge_list(edges, n, m, !undirected);
  } else {
    require(!dense.empty(), Errc::invalid_argument, "give --edges or --adjacency");
    g.directed = !undirected;
    for (const auto& p : dense) g.A.push_back(io::read_matrix_csv(p));
  }
  g.validate();
  return g;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cosie: common subspace estimation, two-sample tests and distributed PCA"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "sample a multilayer graph from a model or SBM design");
  std::string sim_model, sim_config, sim_out, sim_format = "edges";
  std::uint64_t sim_seed = 20240611;
  bool sim_seed_set = false;
  sim->add_option("--model", sim_model, "model JSON (U, V, R or sbm block)");
  sim->add_option("--config", sim_config, "experiment config; its SBM design is sampled");
  sim->add_option("--seed", sim_seed, "master seed")->each([&](const std::string&) { sim_seed_set = true; });
  sim->add_option("--out", sim_out, "output directory")->required();
  sim->add_option("--format", sim_format, "edges or dense")->check(CLI::IsMember({"edges", "dense"}));

  // estimate
  auto* est = app.add_subcommand("estimate", "estimate shared subspaces and score matrices");
  std::string est_edges, est_out;
  std::vector<std::string> est_dense;
  Index est_n = 0, est_m = 0, est_d = 0, est_K = 0;
  std::vector<Index> est_dims;
  bool est_undirected = false;
  est->add_option("--edges", est_edges, "edge list CSV (i,j,layer)");
  est->add_option("--adjacency", est_dense, "dense adjacency CSVs, one per layer");
  est->add_option("--n", est_n, "vertex count (edge lists)");
  est->add_option("--m", est_m, "layer count (edge lists)");
  est->add_flag("--undirected", est_undirected, "treat graphs as undirected");
  est->add_option("--dims", est_dims, "per-layer embedding dimensions (default: auto)");
  est->add_option("--d", est_d, "shared dimension (default: auto)");
  est->add_option("--communities", est_K, "also cluster rows of Uhat into K groups");
  est->add_option("--out", est_out, "output directory")->required();

  // test
  auto* tst = app.add_subcommand("test", "two-sample, multi-sample and changepoint tests on an estimate");
  std::string tst_dir, tst_out;
  double tst_alpha = 0.05;
  bool tst_ridge = false;
  tst->add_option("--estimate", tst_dir, "directory written by `estimate`")->required();
  tst->add_option("--alpha", tst_alpha, "significance level")->check(CLI::Range(1e-12, 1.0 - 1e-12));
  tst->add_flag("--ridge", tst_ridge, "ridge-regularize ill-conditioned covariances");
  tst->add_option("--out", tst_out, "output directory")->required();

  // dpca
  auto* dp = app.add_subcommand("dpca", "distributed PCA over per-node data matrices");
  std::vector<std::string> dp_data;
  Index dp_d = 1;
  bool dp_demean = false;
  std::string dp_out;
  dp->add_option("--data", dp_data, "D x n CSV per node")->required();
  dp->add_option("--d", dp_d, "number of components")->required();
  dp->add_flag("--demean", dp_demean, "center each node's data");
  dp->add_option("--out", dp_out, "output directory")->required();

  // multiness
  auto* mn = app.add_subcommand("multiness", "common / individual decomposition of symmetric matrices");
  std::vector<std::string> mn_data;
  Index mn_d1 = 1, mn_d2 = 0;
  std::string mn_out;
  mn->add_option("--inputs", mn_data, "symmetric n x n CSV per layer")->required();
  mn->add_option("--d1", mn_d1, "common rank")->required();
  mn->add_option("--d2", mn_d2, "individual rank")->required();
  mn->add_option("--out", mn_out, "output directory")->required();

  // study
  auto* st = app.add_subcommand("study", "run a seeded Monte Carlo study");
  std::string st_kind, st_config, st_out;
  std::optional<std::uint64_t> st_seed;
  std::optional<Index> st_reps;
  std::optional<int> st_threads;
  bool st_raw = false, st_full = false;
  st->add_option("kind", st_kind, "score_normality | test_calibration | row_normality | rate | dpca_rate | "
                                  "dpca_rows | multiness | community")
      ->required();
  st->add_option("--config", st_config, "JSON config mirroring ExperimentConfig fields");
  st->add_option("--seed", st_seed, "master seed");
  st->add_option("--replicates", st_reps, "replicate count");
  st->add_option("--threads", st_threads, "worker threads");
  st->add_option("--out", st_out, "output directory")->required();
  st->add_flag("--keep-raw", st_raw, "also write per-replicate raw.csv");
  st->add_flag("--full-design", st_full, "full-size COSIE design (n=2000, 1000 replicates)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) {
      require(sim_model.empty() || sim_config.empty(), Errc::invalid_argument,
              "give at most one of --model and --config");
      CosieModel model;
      json model_doc;
      if (!sim_model.empty()) {
        model = io::read_model(sim_model);
        model_doc = io::model_to_json(model);
      } else {
        harness::ExperimentConfig cfg = load_config(sim_config);
        if (sim_seed_set) cfg.seed = sim_seed;
        const SbmSpec spec =
            harness::cosie_design(cfg, harness::experiment_id(harness::Experiment::cosie, 0), cfg.n, cfg.m);
        model = sbm_to_cosie(spec);
        model_doc = io::sbm_to_json(spec);
      }
      const GraphSample g = sample_cosie(model, Stream(mix_seed({sim_seed, 0})));
      const fs::path out(sim_out);
      fs::create_directories(out);
      io::open_out(out / "model.json") << model_doc.dump(2) << '\n';
      if (sim_format == "edges")
        io::write_edge_list(out / "edges.csv", g);
      else
        io::write_adjacency_csv(out, g);
      std::cout << "sampled " << g.m() << " layers on " << g.n() << " vertices into " << out.string() << '\n';
    } else if (*est) {
      const GraphSample g = load_graphs(est_edges, est_dense, est_n, est_m, est_undirected);
      const SubspaceEstimate e = estimate_cosie(g, est_dims, est_d);
      io::write_estimate(est_out, e);
      if (est_K > 0) {
        const auto labels = recover_communities(e.Uhat, est_K);
        std::ofstream lab = io::open_out(fs::path(est_out) / "labels.csv");
        lab << "vertex,label\n";
        for (std::size_t v = 0; v < labels.size(); ++v) lab << v << ',' << labels[v] << '\n';
      }
      std::cout << "d = " << e.d() << ", m = " << e.m() << '\n';
    } else if (*tst) {
      const SubspaceEstimate e = io::read_estimate(tst_dir);
      TestOptions opt;
      opt.ridge = tst_ridge;
      const auto pairs = pairwise_tests(e, tst_alpha, opt);
      const fs::path out(tst_out);
      io::write_test_reports(out / "pairwise.csv", pairs);
      json summary;
      summary["alpha"] = tst_alpha;
      summary["bonferroni_family"] = pairs.size();
      if (e.m() >= 2) {
        const TestReport all = multi_sample_test(e, opt);
        summary["multi_sample"] = {{"statistic", all.statistic}, {"df", all.df}, {"p", all.p_value},
                                   {"reject", all.p_value < tst_alpha}};
        json scan = json::array();
        for (const TestReport& r : changepoint_scan(e, tst_alpha, opt))
          scan.push_back({{"i", r.indices[0]}, {"j", r.indices[1]}, {"statistic", r.statistic}, {"p", r.p_value},
                          {"reject", r.reject}});
        summary["changepoint"] = std::move(scan);
      }
      io::open_out(out / "summary.json") << summary.dump(2) << '\n';
      for (const TestReport& r : pairs)
        std::cout << r.indices[0] << " vs " << r.indices[1] << ": T = " << r.statistic << ", p = " << r.p_value
                  << (r.reject ? "  *" : "") << '\n';
    } else if (*dp) {
      std::vector<Matrix> locals;
      for (const auto& p : dp_data) locals.push_back(local_pca(io::read_matrix_csv(p), dp_d, dp_demean));
      const DpcaEstimate e = aggregate_pca(locals);
      io::write_matrix_csv(fs::path(dp_out) / "Uhat.csv", e.Uhat);
      std::cout << "aggregated " << locals.size() << " nodes\n";
    } else if (*mn) {
      std::vector<Matrix> A;
      for (const auto& p : mn_data) A.push_back(io::read_matrix_csv(p));
      const MultinessEstimate e = estimate_multiness(A, mn_d1, mn_d2);
      const fs::path out(mn_out);
      io::write_matrix_csv(out / "Fhat.csv", e.Fhat);
      for (std::size_t i = 0; i < A.size(); ++i) {
        io::write_matrix_csv(out / ("Ghat_" + std::to_string(i) + ".csv"), e.Ghat[i]);
        io::write_matrix_csv(out / ("Phat_" + std::to_string(i) + ".csv"), e.Phat[i]);
      }
      if (e.no_separation) std::cerr << "warning: no eigenvalue separation in the projection average\n";
      if (e.degenerate_residual) std::cerr << "warning: degenerate residual filled from the complement\n";
    } else if (*st) {
      harness::ExperimentConfig cfg = load_config(st_config);
      cfg.kind = st_kind;
      if (st_full) cfg.use_full_design();
      if (st_seed) cfg.seed = *st_seed;
      if (st_reps) cfg.replicates = *st_reps;
      if (st_threads) cfg.threads = *st_threads;
      cfg.keep_raw = cfg.keep_raw || st_raw;
      cfg.out_dir = st_out;
      cfg.validate();
      const harness::CalibrationReport rep = harness::run_study(cfg);
      harness::write_report(rep, cfg);
      std::cout << rep.csv();
    }
  } catch (const Error& e) {
    std::cerr << "error [" << errc_name(e.code()) << "]: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
