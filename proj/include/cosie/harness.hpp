#ifndef COSIE_HARNESS_HPP
#define COSIE_HARNESS_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <limits>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cosie/chi2.hpp"
#include "cosie/dpca.hpp"
#include "cosie/error.hpp"
#include "cosie/estimation.hpp"
#include "cosie/inference.hpp"
#include "cosie/io.hpp"
#include "cosie/linalg.hpp"
#include "cosie/models.hpp"
#include "cosie/multiness.hpp"
#include "cosie/rng.hpp"

namespace cosie::harness {

using json = nlohmann::json;

struct ExperimentConfig {
  std::string kind = "test_calibration";
  std::string design = "null";  // null | alternative
  std::uint64_t seed = 20240611;
  Index replicates = 300;
  int threads = 1;
  std::string out_dir;
  bool keep_raw = false;

  // COSIE / SBM
  Index n = 800;
  Index m = 3;
  Index K = 3;
  bool directed = true;
  std::string b_design = "uniform";  // uniform | planted
  double within = 0.5;
  double between = 0.1;
  double min_b_singular = 0.1;
  Index rows = 3;
  std::vector<double> alphas = {0.01, 0.05, 0.10};

  // sweeps
  std::string sweep_param = "m";
  std::vector<Index> sweep = {2, 4, 8, 16};

  // DPCA
  Index D = 200;
  Index d = 3;
  Index n_node = 500;
  std::vector<double> lambda = {40.0, 20.0, 10.0};
  double sigma2 = 1.0;
  bool demean = false;

  // MultiNeSS
  Index d1 = 2;
  Index d2 = 2;
  double sigma = 1.0;

  json to_json() const {
    return json{{"kind", kind},           {"design", design},
                {"seed", seed},           {"replicates", replicates},
                {"threads", threads},     {"out_dir", out_dir},
                {"keep_raw", keep_raw},   {"n", n},
                {"m", m},                 {"K", K},
                {"directed", directed},   {"b_design", b_design},
                {"within", within},       {"between", between},
                {"min_b_singular", min_b_singular},
                {"rows", rows},           {"alphas", alphas},
                {"sweep_param", sweep_param},
                {"sweep", sweep},         {"D", D},
                {"d", d},                 {"n_node", n_node},
                {"lambda", lambda},       {"sigma2", sigma2},
                {"demean", demean},       {"d1", d1},
                {"d2", d2},               {"sigma", sigma}};
  }

  /// Fields absent from `j` keep their defaults; unknown fields are an error.
  static ExperimentConfig from_json(const json& j) {
    ExperimentConfig c;
    const json defaults = c.to_json();
    require(j.is_object(), Errc::io, "config must be an object");
    for (const auto& [key, value] : j.items()) {
      require(defaults.contains(key) || key == "full_design", Errc::io, "unknown config field '" + key + "'");
      (void)value;
    }
    try {
      auto get = [&j](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
      };
      get("kind", c.kind);
      get("design", c.design);
      get("seed", c.seed);
      get("replicates", c.replicates);
      get("threads", c.threads);
      get("out_dir", c.out_dir);
      get("keep_raw", c.keep_raw);
      get("n", c.n);
      get("m", c.m);
      get("K", c.K);
      get("directed", c.directed);
      get("b_design", c.b_design);
      get("within", c.within);
      get("between", c.between);
      get("min_b_singular", c.min_b_singular);
      get("rows", c.rows);
      get("alphas", c.alphas);
      get("sweep_param", c.sweep_param);
      get("sweep", c.sweep);
      get("D", c.D);
      get("d", c.d);
      get("n_node", c.n_node);
      get("lambda", c.lambda);
      get("sigma2", c.sigma2);
      get("demean", c.demean);
      get("d1", c.d1);
      get("d2", c.d2);
      get("sigma", c.sigma);
      if (j.value("full_design", false)) c.use_full_design();
    } catch (const json::exception& e) {
      throw Error(Errc::io, std::string("bad config value: ") + e.what());
    }
    c.validate();
    return c;
  }

  /// Full-size COSIE design (n=2000, 1000 replicates) instead of the desk-scale default.
  void use_full_design() {
    n = 2000;
    replicates = 1000;
  }

  void validate() const {
    require(replicates >= 1, Errc::invalid_argument, "replicates must be >= 1");
    require(threads >= 1, Errc::invalid_argument, "threads must be >= 1");
    require(design == "null" || design == "alternative", Errc::invalid_argument, "design must be null or alternative");
    require(n >= 2 && m >= 1 && K >= 1 && K <= n, Errc::invalid_argument, "invalid n, m, K");
    for (double a : alphas) require(a > 0.0 && a < 1.0, Errc::invalid_argument, "alphas must lie in (0,1)");
  }
};

/// Runs f(r) for r in [0, reps) on up to `threads` workers. Results are
/// stored by replicate index, so the output does not depend on scheduling.
template <class F>
auto run_replicates(Index reps, int threads, F&& f) -> std::vector<decltype(f(Index{}))> {
  using R = decltype(f(Index{}));
  std::vector<R> out(static_cast<std::size_t>(reps));
  std::atomic<Index> next{0};
  std::exception_ptr failure;
  Index failed_at = std::numeric_limits<Index>::max();
  std::mutex mu;
  auto worker = [&]() {
    for (;;) {
      const Index r = next.fetch_add(1);
      if (r >= reps) return;
      try {
        out[static_cast<std::size_t>(r)] = f(r);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (r < failed_at) {
          failed_at = r;
          failure = std::current_exception();
        }
      }
    }
  };
  const int width = static_cast<int>(std::min<Index>(std::max(threads, 1), std::max<Index>(reps, 1)));
  if (width <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < width; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

struct CalibrationReport {
  std::string kind;
  Index replicates = 0;
  std::vector<std::pair<std::string, double>> metrics;
  std::vector<std::string> flags;
  std::vector<std::string> raw_header;
  std::vector<std::vector<double>> raw;

  void set(const std::string& name, double value) {
    for (auto& kv : metrics)
      if (kv.first == name) {
        kv.second = value;
        return;
      }
    metrics.emplace_back(name, value);
  }
  bool has(const std::string& name) const {
    return std::any_of(metrics.begin(), metrics.end(), [&](const auto& kv) { return kv.first == name; });
  }
  double get(const std::string& name) const {
    for (const auto& kv : metrics)
      if (kv.first == name) return kv.second;
    throw Error(Errc::invalid_argument, "report has no metric '" + name + "'");
  }
  void flag(const std::string& f) {
    if (std::find(flags.begin(), flags.end(), f) == flags.end()) flags.push_back(f);
  }

  std::string csv() const {
    std::string s = "metric,value\n";
    for (const auto& [k, v] : metrics) s += k + "," + io::fmt_double(v) + "\n";
    return s;
  }

  std::string raw_csv() const {
    std::string s;
    for (std::size_t i = 0; i < raw_header.size(); ++i) s += (i ? "," : "") + raw_header[i];
    s += "\n";
    for (const auto& row : raw) {
      for (std::size_t i = 0; i < row.size(); ++i) s += (i ? "," : "") + io::fmt_double(row[i]);
      s += "\n";
    }
    return s;
  }

  json summary(const ExperimentConfig& cfg) const {
    json j;
    j["kind"] = kind;
    j["replicates"] = replicates;
    j["config"] = cfg.to_json();
    json m = json::object();
    for (const auto& [k, v] : metrics) m[k] = std::isfinite(v) ? json(v) : json(nullptr);
    j["metrics"] = std::move(m);
    j["flags"] = flags;
    return j;
  }
};

inline void write_report(const CalibrationReport& rep, const ExperimentConfig& cfg) {
  require(!cfg.out_dir.empty(), Errc::invalid_argument, "no output directory configured");
  const std::filesystem::path dir(cfg.out_dir);
  std::filesystem::create_directories(dir);
  io::open_out(dir / "report.csv") << rep.csv();
  io::open_out(dir / "summary.json") << rep.summary(cfg).dump(2) << '\n';
  if (cfg.keep_raw) io::open_out(dir / "raw.csv") << rep.raw_csv();
}

// ---- statistics helpers ----

inline Vector sample_mean(const std::vector<Vector>& xs) {
  Vector mu = Vector::Zero(xs.front().size());
  for (const Vector& x : xs) mu += x;
  return mu / static_cast<double>(xs.size());
}

/// Unbiased sample covariance.
inline Matrix sample_covariance(const std::vector<Vector>& xs) {
  require(xs.size() >= 2, Errc::insufficient_samples, "covariance needs at least two samples");
  const Vector mu = sample_mean(xs);
  Matrix S = Matrix::Zero(mu.size(), mu.size());
  for (const Vector& x : xs) S.noalias() += (x - mu) * (x - mu).transpose();
  return S / static_cast<double>(xs.size() - 1);
}

inline double relative_frobenius(const Matrix& A, const Matrix& ref) { return (A - ref).norm() / ref.norm(); }

struct SlopeFit {
  double slope = std::numeric_limits<double>::quiet_NaN();
  double intercept = std::numeric_limits<double>::quiet_NaN();
  double stderr_slope = std::numeric_limits<double>::quiet_NaN();
  bool ok = false;
};

/// Least-squares line through (x, y); not ok when x is constant.
inline SlopeFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size() && x.size() >= 2, Errc::insufficient_samples, "slope fit needs two points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i] / n, my += y[i] / n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) sxx += (x[i] - mx) * (x[i] - mx), sxy += (x[i] - mx) * (y[i] - my);
  SlopeFit f;
  if (!(sxx > 1e-300)) return f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double rss = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - f.intercept - f.slope * x[i];
    rss += r * r;
  }
  f.stderr_slope = x.size() > 2 ? std::sqrt(rss / (n - 2.0) / sxx) : 0.0;
  f.ok = true;
  return f;
}

inline double quantile(std::vector<double> xs, double q) {
  require(!xs.empty(), Errc::insufficient_samples, "quantile of empty sample");
  std::sort(xs.begin(), xs.end());
  const double pos = q * static_cast<double>(xs.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (pos - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

inline std::string fmt_label(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", x);
  return buf;
}

// ---- seeds ----

enum class Experiment : std::uint64_t {
  cosie = 1,
  rate_cosie = 2,
  rate_dpca = 3,
  dpca_rows = 4,
  multiness = 5,
  community = 6,
};

inline std::uint64_t experiment_id(Experiment e, std::uint64_t variant = 0) {
  return mix_seed({static_cast<std::uint64_t>(e), variant});
}

constexpr std::uint64_t kModelReplicate = 0xffffffffffffffffULL;

/// Replicate r of experiment e: seed = mix(master, e, r).
inline Stream replicate_stream(const ExperimentConfig& cfg, std::uint64_t experiment, Index r) {
  return Stream(mix_seed({cfg.seed, experiment, static_cast<std::uint64_t>(r)}));
}

inline Stream model_stream(const ExperimentConfig& cfg, std::uint64_t experiment) {
  return Stream(mix_seed({cfg.seed, experiment, kModelReplicate}));
}

// ---- model construction ----

/// B with iid U(0,1) entries, redrawn until sigma_min(B) >= floor and every
/// entry leaves room for `headroom` (the local-alternative shift).
inline Matrix admissible_uniform_B(Index K, Stream& rng, double floor, double headroom, bool symmetric) {
  for (int attempt = 0; attempt < 10000; ++attempt) {
    Matrix B = uniform_block_matrix(K, rng, symmetric);
    if (B.maxCoeff() + headroom > 1.0) continue;
    if (linalg::svd_top(B, K).left.values(K - 1) < floor) continue;
    return B;
  }
  throw Error(Errc::degenerate, "could not draw an admissible block matrix");
}

inline Matrix planted_B(Index K, double within, double between) {
  Matrix B = Matrix::Constant(K, K, between);
  B.diagonal().setConstant(within);
  return B;
}

/// Uniform-membership SBM. With `tie`, layer 1 equals layer 0 (null) or
/// layer 0 shifted by 11^T/n (alternative).
inline SbmSpec cosie_design(const ExperimentConfig& cfg, std::uint64_t experiment, Index n, Index m, bool tie = true) {
  Stream ms = model_stream(cfg, experiment);
  Stream label_stream = ms.substream(0);
  SbmSpec spec;
  spec.directed = cfg.directed;
  spec.tau = random_memberships(n, cfg.K, label_stream);
  const double headroom = 1.0 / static_cast<double>(n);
  const double shift = cfg.design == "alternative" ? headroom : 0.0;
  for (Index i = 0; i < m; ++i) {
    Stream bs = ms.substream(1000 + static_cast<std::uint64_t>(i));
    if (cfg.b_design == "planted") {
      spec.B.push_back(planted_B(cfg.K, cfg.within, cfg.between));
    } else {
      require(cfg.b_design == "uniform", Errc::invalid_argument, "b_design must be uniform or planted");
      spec.B.push_back(admissible_uniform_B(cfg.K, bs, cfg.min_b_singular, headroom, !cfg.directed));
    }
  }
  if (tie && m >= 2) spec.B[1] = (spec.B[0].array() + shift).matrix();
  return spec;
}

// ---- COSIE null / alternative study ----

/// Shared run behind score normality, test calibration and row normality.
inline CalibrationReport run_cosie_study(const ExperimentConfig& cfg) {
  cfg.validate();
  require(cfg.m >= 2, Errc::invalid_argument, "the COSIE study needs m >= 2");
  // Both designs share memberships and B(1); only the replicate streams differ.
  const std::uint64_t model_exp = experiment_id(Experiment::cosie, 0);
  const std::uint64_t exp = experiment_id(Experiment::cosie, cfg.design == "alternative" ? 1 : 0);
  const SbmSpec spec = cosie_design(cfg, model_exp, cfg.n, cfg.m);
  const CosieModel model = sbm_to_cosie(spec);
  const Index d = model.d();

  std::vector<Index> rows;
  {
    Stream rs = model_stream(cfg, model_exp).substream(7);
    std::set<Index> picked;
    while (static_cast<Index>(picked.size()) < std::min(cfg.rows, cfg.n))
      picked.insert(static_cast<Index>(rs.below(static_cast<std::uint64_t>(cfg.n))));
    rows.assign(picked.begin(), picked.end());
  }

  const Matrix Sigma1 = sigma_score(model, 0);
  const Vector mu1 = mu_bias(model, 0);
  const double eta = noncentrality(model, 0, 1);
  const Index df = model.directed ? d * d : linalg::vech_size(d);
  const std::vector<Index> dims(static_cast<std::size_t>(cfg.m), d);

  struct Rec {
    double T = 0.0;
    Vector score;
    std::vector<Vector> row_err;
    double plugin_err = 0.0;
  };
  const auto recs = run_replicates(cfg.replicates, cfg.threads, [&](Index r) {
    const GraphSample g = sample_cosie(model, replicate_stream(cfg, exp, r));
    SubspaceEstimate est = estimate_cosie(g, dims, d);
    align_to(est, model);
    Rec rec;
    rec.T = two_sample_test(est, 0, 1).statistic;
    rec.score = linalg::vec(aligned_score_error(est, model, 0));
    for (Index k : rows) rec.row_err.push_back(est.W_U->transpose() * est.Uhat.row(k).transpose() - model.U.row(k).transpose());
    const Matrix Wstar = linalg::kron(*est.W_V, *est.W_U);
    rec.plugin_err = relative_frobenius(sigma_score_plugin(est, 0), Wstar * Sigma1 * Wstar.transpose());
    return rec;
  });

  CalibrationReport rep;
  rep.kind = "cosie_" + cfg.design;
  rep.replicates = cfg.replicates;
  rep.set("n", static_cast<double>(cfg.n));
  rep.set("m", static_cast<double>(cfg.m));
  rep.set("d", static_cast<double>(d));
  rep.set("df", static_cast<double>(df));
  rep.set("eta", eta);
  rep.set("sigma_min_R1", linalg::svd_top(model.R[0], d).left.values(d - 1));

  std::vector<double> T;
  for (const Rec& r : recs) T.push_back(r.T);
  double meanT = 0.0;
  for (double t : T) meanT += t / static_cast<double>(T.size());
  double varT = 0.0;
  for (double t : T) varT += (t - meanT) * (t - meanT);
  varT = T.size() > 1 ? varT / static_cast<double>(T.size() - 1) : std::numeric_limits<double>::quiet_NaN();
  rep.set("T_mean", meanT);
  rep.set("T_var", varT);
  rep.set("T_expected_mean", static_cast<double>(df) + eta);
  rep.set("T_ks_central", ks_distance(T, [df](double x) { return chi2_cdf(x, static_cast<double>(df)); }));
  if (eta > 0.0)
    rep.set("T_ks_noncentral",
            ks_distance(T, [df, eta](double x) { return noncentral_chi2_cdf(x, static_cast<double>(df), eta); }));
  for (double a : cfg.alphas) {
    const double crit = chi2_quantile(1.0 - a, static_cast<double>(df));
    double rate = 0.0;
    for (double t : T) rate += (t > crit) ? 1.0 : 0.0;
    rep.set("reject_rate_" + fmt_label(a), rate / static_cast<double>(T.size()));
    rep.set("theory_power_" + fmt_label(a), 1.0 - noncentral_chi2_cdf(crit, static_cast<double>(df), eta));
  }

  double plugin = 0.0;
  for (const Rec& r : recs) plugin += r.plugin_err / static_cast<double>(recs.size());
  rep.set("plugin_sigma_rel_err_mean", plugin);

  std::vector<Vector> scores;
  for (const Rec& r : recs) scores.push_back(r.score);
  const Vector smean = sample_mean(scores);
  if (recs.size() >= 2) {
    const Matrix scov = sample_covariance(scores);
    rep.set("score_cov_rel_err", relative_frobenius(scov, Sigma1));
    double maxz = 0.0;
    Index within = 0;
    for (Index c = 0; c < smean.size(); ++c) {
      const double se = std::sqrt(scov(c, c) / static_cast<double>(recs.size()));
      const double z = std::abs(smean(c) - mu1(c)) / se;
      maxz = std::max(maxz, z);
      within += z <= 3.0 ? 1 : 0;
    }
    rep.set("score_mean_max_z", maxz);
    rep.set("score_mean_within_3se", static_cast<double>(within));
    rep.set("score_dim", static_cast<double>(smean.size()));
    double max_row = 0.0;
    for (std::size_t q = 0; q < rows.size(); ++q) {
      std::vector<Vector> xs;
      for (const Rec& r : recs) xs.push_back(r.row_err[q]);
      const double e = relative_frobenius(sample_covariance(xs), upsilon_row(model, rows[q]));
      rep.set("row_" + std::to_string(rows[q]) + "_cov_rel_err", e);
      max_row = std::max(max_row, e);
    }
    rep.set("row_cov_rel_err_max", max_row);
  } else {
    rep.flag("variance_undefined");
  }
  rep.set("score_bias_norm", mu1.norm());
  rep.set("score_mean_err_norm", (smean - mu1).norm());

  rep.raw_header = {"replicate", "T"};
  for (Index c = 0; c < d * d; ++c) rep.raw_header.push_back("score_" + std::to_string(c));
  for (std::size_t r = 0; r < recs.size(); ++r) {
    std::vector<double> row = {static_cast<double>(r), recs[r].T};
    for (Index c = 0; c < recs[r].score.size(); ++c) row.push_back(recs[r].score(c));
    rep.raw.push_back(std::move(row));
  }
  return rep;
}

inline CalibrationReport run_score_normality(const ExperimentConfig& cfg) { return run_cosie_study(cfg); }
inline CalibrationReport run_test_calibration(const ExperimentConfig& cfg) { return run_cosie_study(cfg); }
inline CalibrationReport run_row_normality(const ExperimentConfig& cfg) { return run_cosie_study(cfg); }

// ---- rate studies ----

inline void check_sweep(const ExperimentConfig& cfg) {
  require(cfg.sweep.size() >= 3, Errc::invalid_argument, "a rate study needs a sweep of at least three values");
  for (Index v : cfg.sweep) require(v >= 1, Errc::invalid_argument, "sweep values must be positive");
}

inline void finish_slope(CalibrationReport& rep, const std::vector<double>& xs, const std::vector<double>& means) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < xs.size(); ++i) lx.push_back(std::log(xs[i])), ly.push_back(std::log(means[i]));
  const SlopeFit f = fit_line(lx, ly);
  if (!f.ok) rep.flag("slope_fit_degenerate");
  rep.set("slope", f.slope);
  rep.set("slope_stderr", f.stderr_slope);
  rep.set("slope_ci95_lo", f.slope - 1.96 * f.stderr_slope);
  rep.set("slope_ci95_hi", f.slope + 1.96 * f.stderr_slope);
}

/// Mean ||Uhat W - U||_F over a sweep of m (or n) on the uniform-B SBM design.
inline CalibrationReport run_rate_study(const ExperimentConfig& cfg) {
  cfg.validate();
  check_sweep(cfg);
  require(cfg.sweep_param == "m" || cfg.sweep_param == "n", Errc::invalid_argument, "sweep_param must be m or n");
  CalibrationReport rep;
  rep.kind = "rate_cosie_" + cfg.sweep_param;
  rep.replicates = cfg.replicates;
  rep.raw_header = {cfg.sweep_param, "replicate", "frobenius_error"};
  std::vector<double> xs, means;
  for (Index v : cfg.sweep) {
    const Index n = cfg.sweep_param == "n" ? v : cfg.n;
    const Index m = cfg.sweep_param == "m" ? v : cfg.m;
    ExperimentConfig c = cfg;
    c.design = "null";
    // Layers are nested across the m-sweep: layer i has the same B for every m.
    const std::uint64_t exp = experiment_id(Experiment::rate_cosie, cfg.sweep_param == "n" ? static_cast<std::uint64_t>(n) : 0);
    const SbmSpec spec = cosie_design(c, exp, n, m, false);
    const CosieModel model = sbm_to_cosie(spec);
    const std::vector<Index> dims(static_cast<std::size_t>(m), model.d());
    const std::uint64_t rexp = mix_seed({exp, static_cast<std::uint64_t>(v)});
    const auto errs = run_replicates(cfg.replicates, cfg.threads, [&](Index r) {
      const GraphSample g = sample_cosie(model, replicate_stream(cfg, rexp, r));
      const SubspaceEstimate est = estimate_cosie(g, dims, model.d());
      return subspace_errors(est.Uhat, model.U).procrustes_frobenius;
    });
    double mean = 0.0;
    for (std::size_t r = 0; r < errs.size(); ++r) {
      mean += errs[r] / static_cast<double>(errs.size());
      rep.raw.push_back({static_cast<double>(v), static_cast<double>(r), errs[r]});
    }
    rep.set("mean_error_" + cfg.sweep_param + "_" + std::to_string(v), mean);
    xs.push_back(static_cast<double>(cfg.sweep_param == "n" ? n : m));
    means.push_back(mean);
  }
  finish_slope(rep, xs, means);
  return rep;
}

inline SpikedModel spiked_design(const ExperimentConfig& cfg, std::uint64_t exp) {
  Stream ms = model_stream(cfg, exp);
  SpikedModel model;
  model.U = haar_orthonormal(cfg.D, cfg.d, ms);
  require(static_cast<Index>(cfg.lambda.size()) == cfg.d, Errc::invalid_argument, "lambda needs d entries");
  model.lambda = Eigen::Map<const Vector>(cfg.lambda.data(), cfg.d);
  model.sigma2 = cfg.sigma2;
  model.validate();
  return model;
}

/// Mean ||Uhat W - U||_F of distributed PCA over an m-sweep.
inline CalibrationReport run_dpca_rate_study(const ExperimentConfig& cfg) {
  cfg.validate();
  check_sweep(cfg);
  const std::uint64_t exp = experiment_id(Experiment::rate_dpca);
  const SpikedModel model = spiked_design(cfg, exp);
  CalibrationReport rep;
  rep.kind = "rate_dpca_m";
  rep.replicates = cfg.replicates;
  rep.raw_header = {"m", "replicate", "frobenius_error"};
  std::vector<double> xs, means;
  for (Index m : cfg.sweep) {
    const std::uint64_t rexp = mix_seed({exp, static_cast<std::uint64_t>(m)});
    const auto errs = run_replicates(cfg.replicates, cfg.threads, [&](Index r) {
      const auto nodes = sample_spiked(model, cfg.n_node, m, cfg.demean, replicate_stream(cfg, rexp, r));
      return dpca_errors(distributed_pca(nodes, cfg.d, cfg.demean), model.U).procrustes_frobenius;
    });
    double mean = 0.0;
    for (std::size_t r = 0; r < errs.size(); ++r) {
      mean += errs[r] / static_cast<double>(errs.size());
      rep.raw.push_back({static_cast<double>(m), static_cast<double>(r), errs[r]});
    }
    rep.set("mean_error_m_" + std::to_string(m), mean);
    xs.push_back(static_cast<double>(m));
    means.push_back(mean);
  }
  finish_slope(rep, xs, means);
  return rep;
}

/// Covariance of W^T uhat_k - u_k for distributed PCA against sigma^2/N Lambda^{-1}.
inline CalibrationReport run_dpca_row_normality(const ExperimentConfig& cfg, Index k = 0) {
  cfg.validate();
  const std::uint64_t exp = experiment_id(Experiment::dpca_rows);
  const SpikedModel model = spiked_design(cfg, exp);
  require(k >= 0 && k < cfg.D, Errc::out_of_range, "row index out of range");
  const Index N = cfg.m * cfg.n_node;
  const auto errs = run_replicates(cfg.replicates, cfg.threads, [&](Index r) {
    const auto nodes = sample_spiked(model, cfg.n_node, cfg.m, cfg.demean, replicate_stream(cfg, exp, r));
    const DpcaEstimate est = distributed_pca(nodes, cfg.d, cfg.demean);
    const Matrix W = linalg::procrustes_align(est.Uhat, model.U);
    return Vector(W.transpose() * est.Uhat.row(k).transpose() - model.U.row(k).transpose());
  });
  CalibrationReport rep;
  rep.kind = "dpca_rows";
  rep.replicates = cfg.replicates;
  rep.set("N", static_cast<double>(N));
  rep.set("row", static_cast<double>(k));
  const Matrix Ups = dpca_row_covariance(model, N);
  // Exact first-order variance of the eigenvector perturbation at finite spikes.
  Vector finite(cfg.d);
  const double leverage = model.U.row(k).squaredNorm();
  for (Index j = 0; j < cfg.d; ++j) {
    const double l = model.lambda(j);
    finite(j) = model.sigma2 * (1.0 - leverage) * l / (static_cast<double>(N) * (l - model.sigma2) * (l - model.sigma2));
  }
  rep.raw_header = {"replicate"};
  for (Index j = 0; j < cfg.d; ++j) rep.raw_header.push_back("coord_" + std::to_string(j));
  for (std::size_t r = 0; r < errs.size(); ++r) {
    std::vector<double> row = {static_cast<double>(r)};
    for (Index j = 0; j < errs[r].size(); ++j) row.push_back(errs[r](j));
    rep.raw.push_back(std::move(row));
  }
  if (errs.size() >= 2) {
    const Matrix S = sample_covariance(errs);
    rep.set("row_cov_rel_err", relative_frobenius(S, Ups));
    rep.set("row_cov_rel_err_finite_spike", relative_frobenius(S, Matrix(finite.asDiagonal())));
    for (Index j = 0; j < cfg.d; ++j) {
      rep.set("emp_var_" + std::to_string(j), S(j, j));
      rep.set("theory_var_" + std::to_string(j), Ups(j, j));
    }
  } else {
    rep.flag("variance_undefined");
  }
  return rep;
}

// ---- MultiNeSS ----

/// ErrF / ErrG / ErrP over an n-sweep (sweep_param "n") or m-sweep ("m");
/// an empty sweep runs the single (n, m) configuration.
inline CalibrationReport run_multiness_study(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<Index> values = cfg.sweep;
  if (values.empty()) values = {cfg.sweep_param == "m" ? cfg.m : cfg.n};
  CalibrationReport rep;
  rep.kind = "multiness_" + cfg.sweep_param;
  rep.replicates = cfg.replicates;
  rep.raw_header = {cfg.sweep_param, "replicate", "ErrF", "ErrG", "ErrP"};
  std::vector<double> meanP;
  for (Index v : values) {
    const Index n = cfg.sweep_param == "m" ? cfg.n : v;
    const Index m = cfg.sweep_param == "m" ? v : cfg.m;
    const std::uint64_t exp = experiment_id(Experiment::multiness, mix_seed({static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(m)}));
    const auto errs = run_replicates(cfg.replicates, cfg.threads, [&](Index r) {
      Stream s = replicate_stream(cfg, exp, r);
      Stream latent = s.substream(0);
      const MultinessModel model = random_multiness(n, m, cfg.d1, cfg.d2, cfg.sigma, latent);
      const auto A = sample_multiness(model, s.substream(1));
      const MultinessEstimate est = estimate_multiness(A, cfg.d1, cfg.d2);
      return multiness_errors(est, model);
    });
    std::vector<double> F, G, P;
    for (std::size_t r = 0; r < errs.size(); ++r) {
      F.push_back(errs[r].ErrF), G.push_back(errs[r].ErrG), P.push_back(errs[r].ErrP);
      rep.raw.push_back({static_cast<double>(v), static_cast<double>(r), errs[r].ErrF, errs[r].ErrG, errs[r].ErrP});
    }
    const std::string tag = "_" + cfg.sweep_param + "_" + std::to_string(v);
    auto mean = [](const std::vector<double>& x) {
      double s = 0.0;
      for (double e : x) s += e / static_cast<double>(x.size());
      return s;
    };
    for (const auto& [name, xs] : {std::pair{"ErrF", &F}, std::pair{"ErrG", &G}, std::pair{"ErrP", &P}}) {
      rep.set(std::string(name) + "_mean" + tag, mean(*xs));
      rep.set(std::string(name) + "_q05" + tag, quantile(*xs, 0.05));
      rep.set(std::string(name) + "_q95" + tag, quantile(*xs, 0.95));
    }
    meanP.push_back(mean(P));
  }
  if (values.size() >= 2) {
    bool decreasing = true;
    for (std::size_t i = 1; i < meanP.size(); ++i) decreasing = decreasing && meanP[i] < meanP[i - 1];
    rep.set("ErrP_mean_decreasing", decreasing ? 1.0 : 0.0);
  }
  return rep;
}

// ---- community recovery ----

inline CalibrationReport run_community_study(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::uint64_t exp = experiment_id(Experiment::community);
  struct Rec {
    double miss = 0.0;
    double dhat = 0.0;
  };
  const auto recs = run_replicates(cfg.replicates, cfg.threads, [&](Index r) {
    Stream s = replicate_stream(cfg, exp, r);
    Stream ls = s.substream(0);
    SbmSpec spec;
    spec.directed = cfg.directed;
    spec.tau = random_memberships(cfg.n, cfg.K, ls);
    for (Index i = 0; i < cfg.m; ++i) spec.B.push_back(planted_B(cfg.K, cfg.within, cfg.between));
    const CosieModel model = sbm_to_cosie(spec);
    const GraphSample g = sample_cosie(model, s.substream(1));
    Rec rec;
    rec.dhat = static_cast<double>(select_block_dims(g).d);
    const SubspaceEstimate est = estimate_cosie(g, std::vector<Index>(static_cast<std::size_t>(cfg.m), cfg.K), cfg.K);
    const auto labels = recover_communities(est.Uhat, cfg.K, s.substream(2).next_u64());
    rec.miss = misclassification_rate(labels, spec.tau);
    return rec;
  });
  CalibrationReport rep;
  rep.kind = "community";
  rep.replicates = cfg.replicates;
  rep.raw_header = {"replicate", "misclassification", "dhat"};
  double exact = 0.0, mean = 0.0, dcorrect = 0.0;
  for (std::size_t r = 0; r < recs.size(); ++r) {
    exact += recs[r].miss == 0.0 ? 1.0 : 0.0;
    mean += recs[r].miss / static_cast<double>(recs.size());
    dcorrect += recs[r].dhat == static_cast<double>(cfg.K) ? 1.0 : 0.0;
    rep.raw.push_back({static_cast<double>(r), recs[r].miss, recs[r].dhat});
  }
  rep.set("exact_recovery_count", exact);
  rep.set("misclassification_mean", mean);
  rep.set("dhat_correct_count", dcorrect);
  return rep;
}

/// Dispatches on cfg.kind.
inline CalibrationReport run_study(const ExperimentConfig& cfg) {
  const std::string& k = cfg.kind;
  if (k == "score_normality") return run_score_normality(cfg);
  if (k == "test_calibration") return run_test_calibration(cfg);
  if (k == "row_normality") return run_row_normality(cfg);
  if (k == "rate") return run_rate_study(cfg);
  if (k == "dpca_rate") return run_dpca_rate_study(cfg);
  if (k == "dpca_rows") return run_dpca_row_normality(cfg);
  if (k == "multiness") return run_multiness_study(cfg);
  if (k == "community") return run_community_study(cfg);
  throw Error(Errc::invalid_argument, "unknown study kind '" + k + "'");
}

}  // namespace cosie::harness

#endif  // COSIE_HARNESS_HPP
