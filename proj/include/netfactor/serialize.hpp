#pragma once

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "netfactor/ame_sampler.hpp"
#include "netfactor/csv.hpp"
#include "netfactor/dependence_test.hpp"
#include "netfactor/lowrank.hpp"

namespace netfactor {

using nlohmann::json;

inline std::string to_string(SamplerMode m) {
  return m == SamplerMode::joint ? "joint" : "network_only";
}

inline json schedule_to_json(const McmcSchedule& s) {
  return json{{"iterations", s.iterations},
              {"burn_in", s.burn_in},
              {"thin", s.thin},
              {"seed", s.seed}};
}

inline void write_json(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open file for writing: " + path);
  out << j.dump(2) << "\n";
}

inline json test_result_to_json(const TestResult& t) {
  std::vector<double> r(t.canonical_correlations.data(),
                        t.canonical_correlations.data() + t.canonical_correlations.size());
  json j;
  j["r"] = r;
  j["lambda"] = std::isfinite(t.lambda) ? json(t.lambda) : json("inf");
  j["log_lambda"] = std::isfinite(t.log_lambda) ? json(t.log_lambda) : json("inf");
  j["wilks"] = t.wilks;
  j["p_value"] = t.p_value;
  j["alpha"] = t.alpha;
  j["reject"] = t.reject;
  j["saturated"] = t.saturated;
  j["null_draws_used"] = t.null_draws_used;
  j["seed"] = t.null_seed;
  return j;
}

namespace detail {

inline void write_trace_matrix(const std::string& path, const MatrixXd& m,
                               const std::string& prefix) {
  csv::Writer out(path);
  std::vector<std::string> header{"sample"};
  for (int j = 0; j < m.cols(); ++j) header.push_back(prefix + std::to_string(j + 1));
  out.row(header);
  for (int i = 0; i < m.rows(); ++i) {
    std::vector<std::string> row{std::to_string(i + 1)};
    for (int j = 0; j < m.cols(); ++j) row.push_back(csv::format_double(m(i, j)));
    out.row(row);
  }
}

}  // namespace detail

/// One file per parameter plus a JSON metadata file, under `dir`.
inline void save_posterior(const PosteriorSamples& post, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const int s = post.count();

  json meta;
  meta["n"] = post.n;
  meta["p"] = post.p;
  meta["q"] = post.q;
  meta["k"] = post.k;
  meta["mode"] = to_string(post.mode);
  meta["kind"] = to_string(post.kind);
  meta["restrict_ab_uv"] = post.restrict_ab_uv;
  meta["schedule"] = schedule_to_json(post.schedule);
  meta["stored_samples"] = s;
  meta["rho_acceptance"] = post.rho_acceptance;
  meta["rho_proposal_sd_final"] = post.rho_proposal_sd_final;
  write_json(meta, dir + "/meta.json");

  {
    csv::Writer out(dir + "/trace_scalars.csv");
    std::vector<std::string> header{"sample", "mu", "sigma2_e", "rho"};
    for (int c = 0; c < post.q; ++c) header.push_back("beta_" + std::to_string(c + 1));
    out.row(header);
    for (int i = 0; i < s; ++i) {
      std::vector<std::string> row{std::to_string(i + 1), csv::format_double(post.mu[i]),
                                   csv::format_double(post.sigma2_e[i]),
                                   csv::format_double(post.rho[i])};
      for (int c = 0; c < post.q; ++c) row.push_back(csv::format_double(post.beta(i, c)));
      out.row(row);
    }
  }

  detail::write_trace_matrix(dir + "/trace_a.csv", post.a, "a_");
  detail::write_trace_matrix(dir + "/trace_b.csv", post.b, "b_");

  auto write_factor_trace = [&](const std::vector<MatrixXd>& draws, const std::string& path,
                                const std::string& letter) {
    csv::Writer out(path);
    std::vector<std::string> header{"sample"};
    for (int f = 0; f < post.k; ++f)
      for (int i = 0; i < post.n; ++i)
        header.push_back(letter + std::to_string(f + 1) + "_" + std::to_string(i + 1));
    out.row(header);
    for (int d = 0; d < s; ++d) {
      std::vector<std::string> row{std::to_string(d + 1)};
      for (int f = 0; f < post.k; ++f)
        for (int i = 0; i < post.n; ++i) row.push_back(csv::format_double(draws[d](i, f)));
      out.row(row);
    }
  };
  write_factor_trace(post.U, dir + "/trace_U.csv", "u");
  write_factor_trace(post.V, dir + "/trace_V.csv", "v");

  {
    csv::Writer out(dir + "/trace_Sigma_XN.csv");
    const int dim = (s > 0) ? static_cast<int>(post.Sigma_XN[0].rows()) : 0;
    std::vector<std::string> header{"sample"};
    for (int i = 0; i < dim; ++i)
      for (int j = i; j < dim; ++j)
        header.push_back("s_" + std::to_string(i + 1) + "_" + std::to_string(j + 1));
    out.row(header);
    for (int d = 0; d < s; ++d) {
      std::vector<std::string> row{std::to_string(d + 1)};
      for (int i = 0; i < dim; ++i)
        for (int j = i; j < dim; ++j) row.push_back(csv::format_double(post.Sigma_XN[d](i, j)));
      out.row(row);
    }
  }

  {
    csv::Writer out(dir + "/uv_mean.csv");
    for (int i = 0; i < post.n; ++i) {
      std::vector<std::string> row;
      for (int j = 0; j < post.n; ++j) row.push_back(csv::format_double(post.uv_mean(i, j)));
      out.row(row);
    }
  }

  {
    csv::Writer out(dir + "/ess.csv");
    out.row({"parameter", "ess"});
    for (const auto& [name, value] : post.effective_sample_sizes())
      out.row({name, csv::format_double(value)});
  }
}

inline void save_factors(const LatentFactors& f, const std::vector<std::string>& labels,
                         const std::string& path) {
  csv::Writer out(path);
  std::vector<std::string> header{"node", "a", "b"};
  for (int l = 0; l < f.k(); ++l) header.push_back("u" + std::to_string(l + 1));
  for (int l = 0; l < f.k(); ++l) header.push_back("v" + std::to_string(l + 1));
  out.row(header);
  for (int i = 0; i < f.n(); ++i) {
    std::vector<std::string> row{labels[i], csv::format_double(f.a[i]), csv::format_double(f.b[i])};
    for (int l = 0; l < f.k(); ++l) row.push_back(csv::format_double(f.U(i, l)));
    for (int l = 0; l < f.k(); ++l) row.push_back(csv::format_double(f.V(i, l)));
    out.row(row);
  }
}

inline LatentFactors load_factors(const std::string& path) {
  auto rows = csv::read_table(path);
  if (rows.size() < 2) throw ValidationError("load_factors: empty factor file " + path);
  const int cols = static_cast<int>(rows[0].size());
  if (cols < 5 || (cols - 3) % 2 != 0)
    throw ValidationError("load_factors: unexpected column layout in " + path);
  const int k = (cols - 3) / 2;
  const int n = static_cast<int>(rows.size()) - 1;
  LatentFactors f;
  f.a = VectorXd(n);
  f.b = VectorXd(n);
  f.U = MatrixXd(n, k);
  f.V = MatrixXd(n, k);
  for (int i = 0; i < n; ++i) {
    const auto& r = rows[i + 1];
    auto cell = [&](int c) {
      auto v = csv::parse_cell(r[c], path);
      if (!v) throw ValidationError("load_factors: missing cell in " + path);
      return *v;
    };
    f.a[i] = cell(1);
    f.b[i] = cell(2);
    for (int l = 0; l < k; ++l) f.U(i, l) = cell(3 + l);
    for (int l = 0; l < k; ++l) f.V(i, l) = cell(3 + k + l);
  }
  return f;
}

inline void save_scree(const ScreeProfile& scree, const std::string& path) {
  csv::Writer out(path);
  out.row({"index", "proportion"});
  for (int i = 0; i < scree.proportions.size(); ++i)
    out.row({std::to_string(i + 1), csv::format_double(scree.proportions[i])});
}

}  // namespace netfactor
