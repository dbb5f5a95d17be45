#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "netfactor/csv.hpp"
#include "netfactor/errors.hpp"

namespace netfactor {

using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

enum class RelationKind { continuous, binary, rank };

enum class NetworkFormat { dense_csv, edge_list_csv };

inline std::string to_string(RelationKind k) {
  switch (k) {
    case RelationKind::continuous: return "continuous";
    case RelationKind::binary: return "binary";
    case RelationKind::rank: return "rank";
  }
  return "?";
}

inline RelationKind relation_kind_from_string(const std::string& s) {
  if (s == "continuous") return RelationKind::continuous;
  if (s == "binary") return RelationKind::binary;
  if (s == "rank") return RelationKind::rank;
  throw ValidationError("unknown relation kind: " + s);
}

/// Directed relational matrix. Entry (i,j) is the relation from i to j; the
/// diagonal is structurally undefined and always carried as unobserved.
struct RelationalMatrix {
  int n = 0;
  Eigen::MatrixXd values;
  RelationKind kind = RelationKind::continuous;
  BoolMatrix observed;
  std::optional<int> max_nominations;
  std::vector<std::string> labels;

  static RelationalMatrix make(Eigen::MatrixXd vals, RelationKind kind,
                               std::optional<int> max_nom = std::nullopt,
                               std::vector<std::string> labels = {}) {
    RelationalMatrix y;
    y.n = static_cast<int>(vals.rows());
    y.values = std::move(vals);
    y.kind = kind;
    y.observed = BoolMatrix::Constant(y.n, y.n, true);
    y.max_nominations = max_nom;
    y.labels = std::move(labels);
    y.force_diagonal_unobserved();
    y.fill_default_labels();
    y.validate();
    return y;
  }

  void force_diagonal_unobserved() {
    for (int i = 0; i < n; ++i) {
      observed(i, i) = false;
      values(i, i) = 0.0;
    }
  }

  void fill_default_labels() {
    if (static_cast<int>(labels.size()) == n) return;
    labels.resize(n);
    for (int i = 0; i < n; ++i) labels[i] = std::to_string(i + 1);
  }

  bool fully_observed_offdiag() const {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j && !observed(i, j)) return false;
    return true;
  }

  int count_observed() const {
    int c = 0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (observed(i, j)) ++c;
    return c;
  }

  void validate() const {
    if (values.rows() != n || values.cols() != n || observed.rows() != n || observed.cols() != n)
      throw ValidationError("RelationalMatrix: dimension mismatch");
    for (int i = 0; i < n; ++i)
      if (observed(i, i)) throw ValidationError("RelationalMatrix: diagonal must be unobserved");
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (observed(i, j) && !std::isfinite(values(i, j)))
          throw ValidationError("RelationalMatrix: non-finite observed value");
    if (kind == RelationKind::binary) {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          if (observed(i, j) && values(i, j) != 0.0 && values(i, j) != 1.0)
            throw ValidationError("RelationalMatrix: binary values must be 0 or 1");
    }
    if (kind == RelationKind::rank) {
      if (!max_nominations || *max_nominations <= 0)
        throw ValidationError("RelationalMatrix: rank kind requires positive max_nominations");
      for (int i = 0; i < n; ++i) {
        std::vector<int> seen;
        for (int j = 0; j < n; ++j) {
          if (!observed(i, j)) continue;
          double v = values(i, j);
          if (v < 0.0 || v != std::floor(v))
            throw ValidationError("RelationalMatrix: rank values must be non-negative integers");
          int r = static_cast<int>(v);
          if (r > *max_nominations)
            throw ValidationError("RelationalMatrix: rank value exceeds max_nominations in row " +
                                  std::to_string(i + 1));
          if (r > 0) {
            if (std::find(seen.begin(), seen.end(), r) != seen.end())
              throw ValidationError("RelationalMatrix: duplicate nonzero rank in row " +
                                    std::to_string(i + 1));
            seen.push_back(r);
          }
        }
      }
    }
  }
};

/// Nodal attributes, n rows by p columns, with a missingness mask.
struct AttributeMatrix {
  int n = 0;
  int p = 0;
  Eigen::MatrixXd values;
  BoolMatrix observed;
  bool centered = false;
  std::vector<std::string> names;
  std::vector<std::string> labels;

  static AttributeMatrix make(Eigen::MatrixXd vals, std::vector<std::string> names = {},
                              std::vector<std::string> labels = {}) {
    AttributeMatrix x;
    x.n = static_cast<int>(vals.rows());
    x.p = static_cast<int>(vals.cols());
    x.values = std::move(vals);
    x.observed = BoolMatrix::Constant(x.n, x.p, true);
    x.names = std::move(names);
    x.labels = std::move(labels);
    x.fill_default_names();
    return x;
  }

  void fill_default_names() {
    if (static_cast<int>(names.size()) != p) {
      names.resize(p);
      for (int j = 0; j < p; ++j) names[j] = "x" + std::to_string(j + 1);
    }
    if (static_cast<int>(labels.size()) != n) {
      labels.resize(n);
      for (int i = 0; i < n; ++i) labels[i] = std::to_string(i + 1);
    }
  }

  int count_observed(int col) const {
    int c = 0;
    for (int i = 0; i < n; ++i)
      if (observed(i, col)) ++c;
    return c;
  }

  void validate() const {
    if (values.rows() != n || values.cols() != p || observed.rows() != n || observed.cols() != p)
      throw ValidationError("AttributeMatrix: dimension mismatch");
    if (centered) {
      for (int j = 0; j < p; ++j) {
        double sum = 0.0;
        int c = 0;
        bool full = true;
        for (int i = 0; i < n; ++i) {
          if (observed(i, j)) {
            sum += values(i, j);
            ++c;
          } else {
            full = false;
          }
        }
        if (full && c > 0 && std::abs(sum / c) > 1e-10)
          throw ValidationError("AttributeMatrix: centered flag set but column mean nonzero");
      }
    }
  }
};

/// A pairwise covariate w_{i,j} entering the latent-relation regression.
struct DyadCovariate {
  std::string label;
  Eigen::MatrixXd values;

  void validate(int n) const {
    if (values.rows() != n || values.cols() != n)
      throw ValidationError("DyadCovariate '" + label + "': dimensions do not match network");
    if (!values.allFinite())
      throw ValidationError("DyadCovariate '" + label + "': non-finite entries");
  }
};

/// Subtract the observed-entry mean from every column. Missing entries are
/// excluded from the means and keep their mask; idempotent.
inline AttributeMatrix center_attributes(const AttributeMatrix& x) {
  AttributeMatrix out = x;
  for (int j = 0; j < x.p; ++j) {
    double sum = 0.0;
    int c = 0;
    for (int i = 0; i < x.n; ++i) {
      if (x.observed(i, j)) {
        sum += x.values(i, j);
        ++c;
      }
    }
    if (c == 0)
      throw ValidationError("center_attributes: column " + x.names[j] + " has no observed entries");
    double mean = sum / c;
    for (int i = 0; i < x.n; ++i)
      if (x.observed(i, j)) out.values(i, j) -= mean;
  }
  out.centered = true;
  return out;
}

/// Density-thresholded binarization B_d: entries 1 where y exceeds the
/// empirical (1-d)-quantile, so exactly floor(d * n(n-1)) entries are 1.
/// Ties at the threshold are resolved strictly-greater first, then ascending
/// (i,j) index order.
inline RelationalMatrix binarize(const RelationalMatrix& y, double density) {
  if (!(density > 0.0 && density < 1.0)) throw ValidationError("binarize: density must be in (0,1)");
  if (!y.fully_observed_offdiag())
    throw ValidationError("binarize: network must be fully observed off the diagonal");
  const int n = y.n;
  const long m = static_cast<long>(n) * (n - 1);
  const long target = static_cast<long>(std::floor(density * static_cast<double>(m)));

  RelationalMatrix out = y;
  out.kind = RelationKind::binary;
  out.max_nominations.reset();
  out.values.setZero();
  out.force_diagonal_unobserved();
  if (target == 0) return out;

  std::vector<double> vals;
  vals.reserve(m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) vals.push_back(y.values(i, j));
  std::vector<double> sorted = vals;
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  const double threshold = sorted[target - 1];

  long strictly = 0;
  for (double v : vals)
    if (v > threshold) ++strictly;
  long remaining = target - strictly;

  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      double v = y.values(i, j);
      if (v > threshold) {
        out.values(i, j) = 1.0;
      } else if (v == threshold && remaining > 0) {
        out.values(i, j) = 1.0;
        --remaining;
      }
    }
  }
  return out;
}

namespace detail {

inline int label_index(std::vector<std::string>& labels, std::map<std::string, int>& index,
                       const std::string& name) {
  auto it = index.find(name);
  if (it != index.end()) return it->second;
  int id = static_cast<int>(labels.size());
  labels.push_back(name);
  index.emplace(name, id);
  return id;
}

}  // namespace detail

/// Load a network from CSV. Dense form: header row/column of node labels,
/// empty cells missing. Edge-list form: header (src,dst,value); absent pairs
/// are 0 for binary/rank kinds and missing for continuous. Nodes that appear
/// in no edge cannot be represented in edge-list form.
inline RelationalMatrix load_network(const std::string& path, NetworkFormat format,
                                     RelationKind kind,
                                     std::optional<int> max_nominations = std::nullopt) {
  auto rows = csv::read_table(path);
  RelationalMatrix y;
  y.kind = kind;
  y.max_nominations = max_nominations;

  if (format == NetworkFormat::dense_csv) {
    const int n = static_cast<int>(rows[0].size()) - 1;
    if (n <= 0 || static_cast<int>(rows.size()) != n + 1)
      throw ValidationError("load_network: dense input is not a square labeled table in " + path);
    y.n = n;
    y.labels.assign(rows[0].begin() + 1, rows[0].end());
    y.values = Eigen::MatrixXd::Zero(n, n);
    y.observed = BoolMatrix::Constant(n, n, false);
    for (int i = 0; i < n; ++i) {
      const auto& r = rows[i + 1];
      if (static_cast<int>(r.size()) != n + 1)
        throw ValidationError("load_network: row " + std::to_string(i + 2) + " has wrong width in " + path);
      for (int j = 0; j < n; ++j) {
        auto v = csv::parse_cell(r[j + 1], path + " row " + std::to_string(i + 2));
        if (v && i != j) {
          y.values(i, j) = *v;
          y.observed(i, j) = true;
        }
      }
    }
  } else {
    if (rows[0].size() < 3)
      throw ValidationError("load_network: edge list needs a (src,dst,value) header in " + path);
    std::map<std::string, int> index;
    std::vector<std::string> labels;
    struct Edge {
      int i, j;
      double v;
    };
    std::vector<Edge> edges;
    for (size_t r = 1; r < rows.size(); ++r) {
      if (rows[r].size() < 3)
        throw ValidationError("load_network: short edge row " + std::to_string(r + 1) + " in " + path);
      int i = detail::label_index(labels, index, rows[r][0]);
      int j = detail::label_index(labels, index, rows[r][1]);
      if (i == j) throw ValidationError("load_network: self-relation in edge list at row " + std::to_string(r + 1));
      auto v = csv::parse_cell(rows[r][2], path + " row " + std::to_string(r + 1));
      if (!v) throw ValidationError("load_network: empty value in edge list at row " + std::to_string(r + 1));
      edges.push_back({i, j, *v});
    }
    const int n = static_cast<int>(labels.size());
    y.n = n;
    y.labels = labels;
    y.values = Eigen::MatrixXd::Zero(n, n);
    const bool absent_is_zero = (kind != RelationKind::continuous);
    y.observed = BoolMatrix::Constant(n, n, absent_is_zero);
    BoolMatrix seen = BoolMatrix::Constant(n, n, false);
    for (const auto& e : edges) {
      if (seen(e.i, e.j))
        throw ValidationError("load_network: duplicate edge " + labels[e.i] + "->" + labels[e.j]);
      seen(e.i, e.j) = true;
      y.values(e.i, e.j) = e.v;
      y.observed(e.i, e.j) = true;
    }
  }
  y.force_diagonal_unobserved();
  y.fill_default_labels();
  y.validate();
  return y;
}

inline void save_network(const RelationalMatrix& y, const std::string& path,
                         NetworkFormat format = NetworkFormat::dense_csv) {
  csv::Writer out(path);
  if (format == NetworkFormat::dense_csv) {
    std::vector<std::string> header{"node"};
    header.insert(header.end(), y.labels.begin(), y.labels.end());
    out.row(header);
    for (int i = 0; i < y.n; ++i) {
      std::vector<std::string> row{y.labels[i]};
      for (int j = 0; j < y.n; ++j)
        row.push_back(y.observed(i, j) ? csv::format_double(y.values(i, j)) : "");
      out.row(row);
    }
  } else {
    out.row({"src", "dst", "value"});
    const bool absent_is_zero = (y.kind != RelationKind::continuous);
    for (int i = 0; i < y.n; ++i)
      for (int j = 0; j < y.n; ++j) {
        if (i == j || !y.observed(i, j)) continue;
        if (absent_is_zero && y.values(i, j) == 0.0) continue;
        out.row({y.labels[i], y.labels[j], csv::format_double(y.values(i, j))});
      }
  }
}

/// Attribute CSV: header (node,name1,...,nameP); empty cells missing.
inline AttributeMatrix load_attributes(const std::string& path) {
  auto rows = csv::read_table(path);
  const int p = static_cast<int>(rows[0].size()) - 1;
  if (p <= 0) throw ValidationError("load_attributes: no attribute columns in " + path);
  const int n = static_cast<int>(rows.size()) - 1;
  if (n <= 0) throw ValidationError("load_attributes: no rows in " + path);
  AttributeMatrix x;
  x.n = n;
  x.p = p;
  x.names.assign(rows[0].begin() + 1, rows[0].end());
  x.values = Eigen::MatrixXd::Zero(n, p);
  x.observed = BoolMatrix::Constant(n, p, false);
  x.labels.resize(n);
  for (int i = 0; i < n; ++i) {
    const auto& r = rows[i + 1];
    if (static_cast<int>(r.size()) != p + 1)
      throw ValidationError("load_attributes: row " + std::to_string(i + 2) + " has wrong width in " + path);
    x.labels[i] = r[0];
    for (int j = 0; j < p; ++j) {
      auto v = csv::parse_cell(r[j + 1], path + " row " + std::to_string(i + 2));
      if (v) {
        x.values(i, j) = *v;
        x.observed(i, j) = true;
      }
    }
  }
  x.validate();
  return x;
}

inline void save_attributes(const AttributeMatrix& x, const std::string& path) {
  csv::Writer out(path);
  std::vector<std::string> header{"node"};
  header.insert(header.end(), x.names.begin(), x.names.end());
  out.row(header);
  for (int i = 0; i < x.n; ++i) {
    std::vector<std::string> row{x.labels[i]};
    for (int j = 0; j < x.p; ++j)
      row.push_back(x.observed(i, j) ? csv::format_double(x.values(i, j)) : "");
    out.row(row);
  }
}

/// Dense square matrix without the node-label frame (dyadic covariates,
/// posterior-mean effects).
inline Eigen::MatrixXd load_square_matrix(const std::string& path) {
  auto rows = csv::read_table(path);
  // Accept either a labeled dense network table or a plain numeric table.
  bool corner_numeric = true;
  try {
    corner_numeric = csv::parse_cell(rows[0][0], path).has_value();
  } catch (const ValidationError&) {
    corner_numeric = false;
  }
  bool labeled = !corner_numeric && rows[0].size() == rows.size();
  if (labeled && rows.size() > 1) {
    RelationalMatrix y = load_network(path, NetworkFormat::dense_csv, RelationKind::continuous);
    return y.values;
  }
  const int n = static_cast<int>(rows.size());
  Eigen::MatrixXd m(n, static_cast<int>(rows[0].size()));
  for (int i = 0; i < n; ++i) {
    if (rows[i].size() != rows[0].size())
      throw ValidationError("load_square_matrix: ragged rows in " + path);
    for (size_t j = 0; j < rows[i].size(); ++j) {
      auto v = csv::parse_cell(rows[i][j], path);
      m(i, static_cast<int>(j)) = v.value_or(0.0);
    }
  }
  return m;
}

}  // namespace netfactor
