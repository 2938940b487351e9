#ifndef COSIE_IO_HPP
#define COSIE_IO_HPP

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cosie/error.hpp"
#include "cosie/estimation.hpp"
#include "cosie/inference.hpp"
#include "cosie/linalg.hpp"
#include "cosie/models.hpp"

namespace cosie::io {

using json = nlohmann::json;

/// %.17g round-trips every double, so written CSVs are exact and byte-stable.
inline std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(out.good(), Errc::io, "cannot open " + path.string() + " for writing");
  return out;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), Errc::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_matrix_csv(const std::filesystem::path& path, const Matrix& M) {
  std::ofstream out = open_out(path);
  for (Index i = 0; i < M.rows(); ++i) {
    for (Index j = 0; j < M.cols(); ++j) {
      if (j) out << ',';
      out << fmt_double(M(i, j));
    }
    out << '\n';
  }
}

inline std::vector<std::vector<double>> parse_csv_numbers(const std::string& text, const std::string& what) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        throw Error(Errc::io, what + ": non-numeric cell '" + cell + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix read_matrix_csv(const std::filesystem::path& path) {
  const auto rows = parse_csv_numbers(read_text(path), path.string());
  require(!rows.empty(), Errc::io, path.string() + " holds no rows");
  Matrix M(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i].size() == rows.front().size(), Errc::io, path.string() + ": ragged rows");
    for (std::size_t j = 0; j < rows[i].size(); ++j) M(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  }
  return M;
}

inline json matrix_to_json(const Matrix& M) {
  json rows = json::array();
  for (Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const json& j, const std::string& what) {
  require(j.is_array() && !j.empty() && j.front().is_array(), Errc::io, what + " must be an array of rows");
  Matrix M(static_cast<Index>(j.size()), static_cast<Index>(j.front().size()));
  for (std::size_t r = 0; r < j.size(); ++r) {
    require(j[r].size() == j.front().size(), Errc::io, what + ": ragged rows");
    for (std::size_t c = 0; c < j[r].size(); ++c) M(static_cast<Index>(r), static_cast<Index>(c)) = j[r][c].get<double>();
  }
  return M;
}

inline json model_to_json(const CosieModel& model) {
  json j;
  j["n"] = model.n();
  j["d"] = model.d();
  j["directed"] = model.directed;
  j["U"] = matrix_to_json(model.U);
  j["V"] = matrix_to_json(model.V);
  j["R"] = json::array();
  for (const Matrix& r : model.R) j["R"].push_back(matrix_to_json(r));
  return j;
}

inline json sbm_to_json(const SbmSpec& spec) {
  json s;
  s["tau"] = spec.tau;
  s["phi"] = spec.col_labels();
  s["B"] = json::array();
  for (const Matrix& b : spec.B) s["B"].push_back(matrix_to_json(b));
  json j;
  j["n"] = spec.tau.size();
  j["d"] = spec.blocks();
  j["directed"] = spec.directed;
  j["sbm"] = std::move(s);
  return j;
}

/// Accepts either explicit (U, V, R) or an `sbm` block.
inline CosieModel model_from_json(const json& j) {
  try {
    const bool directed = j.value("directed", true);
    CosieModel model;
    if (j.contains("sbm")) {
      const json& s = j.at("sbm");
      SbmSpec spec;
      spec.directed = directed;
      spec.tau = s.at("tau").get<std::vector<int>>();
      if (s.contains("phi")) spec.phi = s.at("phi").get<std::vector<int>>();
      for (const json& b : s.at("B")) spec.B.push_back(matrix_from_json(b, "sbm.B"));
      model = sbm_to_cosie(spec);
    } else {
      model.directed = directed;
      model.U = matrix_from_json(j.at("U"), "U");
      model.V = j.contains("V") ? matrix_from_json(j.at("V"), "V") : model.U;
      for (const json& r : j.at("R")) model.R.push_back(matrix_from_json(r, "R"));
      model.validate();
    }
    if (j.contains("n")) require(j.at("n").get<Index>() == model.n(), Errc::shape_mismatch, "field n disagrees with U");
    if (j.contains("d")) require(j.at("d").get<Index>() == model.d(), Errc::shape_mismatch, "field d disagrees with U");
    return model;
  } catch (const json::exception& e) {
    throw Error(Errc::io, std::string("malformed model document: ") + e.what());
  }
}

inline CosieModel read_model(const std::filesystem::path& path) {
  try {
    return model_from_json(json::parse(read_text(path)));
  } catch (const json::parse_error& e) {
    throw Error(Errc::io, path.string() + ": " + e.what());
  }
}

/// Edge triples (i, j, layer), 0-based. Undirected layers list i <= j only.
inline void write_edge_list(const std::filesystem::path& path, const GraphSample& g) {
  std::ofstream out = open_out(path);
  out << "i,j,layer\n";
  for (Index l = 0; l < g.m(); ++l) {
    const Matrix& A = g.A[static_cast<std::size_t>(l)];
    for (Index i = 0; i < A.rows(); ++i)
      for (Index j = g.directed ? 0 : i; j < A.cols(); ++j)
        if (A(i, j) != 0.0) out << i << ',' << j << ',' << l << '\n';
  }
}

inline GraphSample read_edge_list(const std::filesystem::path& path, Index n, Index m, bool directed) {
  require(n >= 1 && m >= 1, Errc::invalid_argument, "edge list needs n, m >= 1");
  std::string text = read_text(path);
  if (text.rfind("i,j,layer", 0) == 0) text = text.substr(text.find('\n') + 1);
  GraphSample g;
  g.directed = directed;
  g.A.assign(static_cast<std::size_t>(m), Matrix::Zero(n, n));
  for (const auto& row : parse_csv_numbers(text, path.string())) {
    require(row.size() == 3, Errc::io, path.string() + ": edge rows need three fields");
    const Index i = static_cast<Index>(row[0]), j = static_cast<Index>(row[1]), l = static_cast<Index>(row[2]);
    require(i >= 0 && i < n && j >= 0 && j < n && l >= 0 && l < m, Errc::io, path.string() + ": index out of range");
    g.A[static_cast<std::size_t>(l)](i, j) = 1.0;
    if (!directed) g.A[static_cast<std::size_t>(l)](j, i) = 1.0;
  }
  return g;
}

inline void write_adjacency_csv(const std::filesystem::path& dir, const GraphSample& g) {
  for (Index l = 0; l < g.m(); ++l)
    write_matrix_csv(dir / ("A_" + std::to_string(l) + ".csv"), g.A[static_cast<std::size_t>(l)]);
}

inline void write_estimate(const std::filesystem::path& dir, const SubspaceEstimate& est, json manifest = json::object()) {
  std::filesystem::create_directories(dir);
  write_matrix_csv(dir / "Uhat.csv", est.Uhat);
  write_matrix_csv(dir / "Vhat.csv", est.Vhat);
  for (Index i = 0; i < est.m(); ++i)
    write_matrix_csv(dir / ("Rhat_" + std::to_string(i) + ".csv"), est.Rhat[static_cast<std::size_t>(i)]);
  manifest["n"] = est.n();
  manifest["d"] = est.d();
  manifest["m"] = est.m();
  manifest["dims"] = est.dims;
  manifest["directed"] = est.directed;
  manifest["files"] = {{"U", "Uhat.csv"}, {"V", "Vhat.csv"}, {"R_prefix", "Rhat_"}};
  open_out(dir / "manifest.json") << manifest.dump(2) << '\n';
}

inline SubspaceEstimate read_estimate(const std::filesystem::path& dir) {
  const json manifest = json::parse(read_text(dir / "manifest.json"));
  SubspaceEstimate est;
  est.Uhat = read_matrix_csv(dir / "Uhat.csv");
  est.Vhat = read_matrix_csv(dir / "Vhat.csv");
  est.directed = manifest.value("directed", true);
  est.dims = manifest.at("dims").get<std::vector<Index>>();
  const Index m = manifest.at("m").get<Index>();
  for (Index i = 0; i < m; ++i) est.Rhat.push_back(read_matrix_csv(dir / ("Rhat_" + std::to_string(i) + ".csv")));
  return est;
}

inline void write_test_reports(const std::filesystem::path& path, const std::vector<TestReport>& reports) {
  std::ofstream out = open_out(path);
  out << "i,j,statistic,df,p\n";
  for (const TestReport& r : reports) {
    const bool pair = r.indices.size() == 2 && r.kind != TestKind::multi_sample;
    out << (pair ? std::to_string(r.indices[0]) : std::string("all")) << ','
        << (pair ? std::to_string(r.indices[1]) : std::string("all")) << ',' << fmt_double(r.statistic) << ','
        << r.df << ',' << fmt_double(r.p_value) << '\n';
  }
}

}  // namespace cosie::io

#endif  // COSIE_IO_HPP
