#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "error.hpp"
#include "io.hpp"
#include "linalg.hpp"
#include "model.hpp"
#include "random.hpp"

namespace moe {

/// Train/test split of a numeric CSV with training-set ZCA whitening of the
/// features and an affine map of the target onto [-1, 1] by training min/max.
struct TabularDataset {
  std::string source;
  std::vector<std::string> features;  // kept feature columns
  std::string target;
  double split = 0.75;
  Dataset train;
  Dataset test;
  Vector mean;         // training feature mean
  Matrix whitening;    // x_white = whitening * (x - mean)
  double y_min = 0.0;  // y_scaled = 2 (y - y_min) / (y_max - y_min) - 1
  double y_max = 0.0;
  Eigen::Index rejected_rows = 0;
  std::vector<std::string> dropped_columns;
  std::vector<std::string> warnings;

  double unscale_target(double y) const { return y_min + 0.5 * (y + 1.0) * (y_max - y_min); }
};

inline Json tabular_to_json(const TabularDataset& t) {
  return {{"source", t.source},
          {"features", t.features},
          {"target", t.target},
          {"split", t.split},
          {"train_rows", t.train.n()},
          {"test_rows", t.test.n()},
          {"mean", vector_to_json(t.mean)},
          {"whitening", matrix_to_json(t.whitening)},
          {"y_min", t.y_min},
          {"y_max", t.y_max},
          {"rejected_rows", t.rejected_rows},
          {"dropped_columns", t.dropped_columns},
          {"warnings", t.warnings}};
}

/// Reads a headed numeric CSV. Empty `feature_cols` selects every column other
/// than the target. Rows with a non-numeric selected cell are rejected and counted.
inline TabularDataset ingest_csv(const std::string& path, std::vector<std::string> feature_cols,
                                 const std::string& target_col, double split, std::uint64_t seed) {
  if (!(split > 0.0 && split < 1.0)) throw ConfigError("ingest: split must lie in (0, 1)");
  std::ifstream is(path);
  if (!is) throw DataError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(is, line)) throw DataError("'" + path + "' is empty");
  std::vector<std::string> header = split_csv_line(line);
  for (auto& h : header) {
    while (!h.empty() && (h.front() == ' ' || h.front() == '\t')) h.erase(h.begin());
    while (!h.empty() && (h.back() == ' ' || h.back() == '\t')) h.pop_back();
  }
  auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ConfigError("ingest: column '" + name + "' not found in '" + path + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t target = column(target_col);
  if (feature_cols.empty())
    for (const auto& h : header)
      if (h != target_col) feature_cols.push_back(h);
  std::vector<std::size_t> cols;
  for (const auto& f : feature_cols) cols.push_back(column(f));
  if (cols.empty()) throw ConfigError("ingest: no feature columns");

  TabularDataset out;
  out.source = path;
  out.target = target_col;
  out.split = split;
  std::vector<std::vector<double>> rows;
  std::vector<double> ys;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    std::vector<double> row(cols.size());
    double y = 0.0;
    bool ok = cells.size() == header.size() && parse_number(cells[target], y);
    for (std::size_t c = 0; ok && c < cols.size(); ++c) ok = parse_number(cells[cols[c]], row[c]);
    if (!ok) {
      ++out.rejected_rows;
      continue;
    }
    rows.push_back(std::move(row));
    ys.push_back(y);
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  if (n < 2) throw DataError("ingest: fewer than two usable rows in '" + path + "'");
  if (out.rejected_rows > 0) out.warnings.push_back(std::to_string(out.rejected_rows) + " rows rejected (non-numeric cells)");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Engine rng = make_engine(seed, 0x5e1);
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i);
    std::swap(order[i], order[pick(rng)]);
  }
  const auto n_train = static_cast<Eigen::Index>(std::floor(split * static_cast<double>(n)));
  if (n_train < 2 || n_train >= n) throw DataError("ingest: split leaves an empty train or test set");

  // training statistics only
  const auto p = static_cast<Eigen::Index>(cols.size());
  Matrix raw(n, p);
  Vector yv(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto src = static_cast<std::size_t>(order[static_cast<std::size_t>(i)]);
    for (Eigen::Index c = 0; c < p; ++c) raw(i, c) = rows[src][static_cast<std::size_t>(c)];
    yv[i] = ys[src];
  }
  const Matrix train_raw = raw.topRows(n_train);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index c = 0; c < p; ++c) {
    const double mx = train_raw.col(c).maxCoeff(), mn = train_raw.col(c).minCoeff();
    if (mx - mn <= 1e-12 * std::max(1.0, std::abs(mx))) {
      out.dropped_columns.push_back(feature_cols[static_cast<std::size_t>(c)]);
      out.warnings.push_back("constant feature column '" + feature_cols[static_cast<std::size_t>(c)] + "' dropped");
    } else {
      keep.push_back(c);
      out.features.push_back(feature_cols[static_cast<std::size_t>(c)]);
    }
  }
  if (keep.empty()) throw DataError("ingest: every feature column is constant");
  const auto d = static_cast<Eigen::Index>(keep.size());
  Matrix kept(n, d);
  for (Eigen::Index c = 0; c < d; ++c) kept.col(c) = raw.col(keep[static_cast<std::size_t>(c)]);

  out.mean = kept.topRows(n_train).colwise().mean().transpose();
  const Matrix centered = kept.topRows(n_train).rowwise() - out.mean.transpose();
  const Matrix cov = centered.transpose() * centered / static_cast<double>(n_train);
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
  const Vector lam = es.eigenvalues();
  if (lam[0] <= 1e-12 * lam[d - 1]) throw DataError("ingest: feature covariance is singular (collinear columns)");
  out.whitening = es.eigenvectors() * lam.cwiseInverse().cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();

  out.y_min = yv.head(n_train).minCoeff();
  out.y_max = yv.head(n_train).maxCoeff();
  if (!(out.y_max > out.y_min)) throw DataError("ingest: target is constant on the training set, scaling degenerate");

  auto build = [&](Eigen::Index begin, Eigen::Index count) {
    Dataset ds;
    const Matrix c = kept.middleRows(begin, count).rowwise() - out.mean.transpose();
    ds.x = c * out.whitening.transpose();
    ds.y = ((yv.segment(begin, count).array() - out.y_min) * (2.0 / (out.y_max - out.y_min)) - 1.0).matrix();
    return ds;
  };
  out.train = build(0, n_train);
  out.test = build(n_train, n - n_train);
  return out;
}

}  // namespace moe
