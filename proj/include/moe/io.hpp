#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "activation.hpp"
#include "error.hpp"
#include "gating_em.hpp"
#include "linalg.hpp"
#include "model.hpp"

namespace moe {

using Json = nlohmann::json;

/// Shortest round-trip decimal form; NaN becomes an empty cell.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline bool parse_number(std::string_view s, double& out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '"' || s.back() == '\r')) s.remove_suffix(1);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size() && std::isfinite(out);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') quoted = !quoted;
    else if (c == ',' && !quoted) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') cur.push_back(c);
  }
  out.push_back(cur);
  return out;
}

inline void ensure_directory(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw DataError("cannot create output directory '" + dir + "'");
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  return os;
}

inline std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

/// Dataset CSV with header x0..x{d-1},y[,z].
inline void write_dataset_csv(const std::string& path, const Dataset& data) {
  data.validate();
  std::ofstream os = open_output(path);
  for (Eigen::Index j = 0; j < data.d(); ++j) os << 'x' << j << ',';
  os << 'y' << (data.z ? ",z" : "") << '\n';
  for (Eigen::Index s = 0; s < data.n(); ++s) {
    for (Eigen::Index j = 0; j < data.d(); ++j) os << format_number(data.x(s, j)) << ',';
    os << format_number(data.y[s]);
    if (data.z) os << ',' << (*data.z)[static_cast<std::size_t>(s)];
    os << '\n';
  }
  if (!os) throw DataError("failed writing '" + path + "'");
}

inline Dataset read_dataset_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open dataset '" + path + "'");
  std::string line;
  if (!std::getline(is, line)) throw DataError("dataset '" + path + "' is empty");
  const auto header = split_csv_line(line);
  Eigen::Index d = 0;
  while (d < static_cast<Eigen::Index>(header.size()) && header[static_cast<std::size_t>(d)] == "x" + std::to_string(d)) ++d;
  if (d == 0 || d >= static_cast<Eigen::Index>(header.size()) || header[static_cast<std::size_t>(d)] != "y")
    throw DataError("dataset '" + path + "': header must be x0,...,x{d-1},y[,z]");
  const bool has_z = static_cast<Eigen::Index>(header.size()) == d + 2 && header.back() == "z";
  if (static_cast<Eigen::Index>(header.size()) != d + 1 + (has_z ? 1 : 0))
    throw DataError("dataset '" + path + "': unexpected columns after y");

  std::vector<double> xs, ys;
  std::vector<int> zs;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) throw DataError(path + ":" + std::to_string(lineno) + ": wrong number of cells");
    double v = 0.0;
    for (Eigen::Index j = 0; j <= d; ++j) {
      if (!parse_number(cells[static_cast<std::size_t>(j)], v))
        throw DataError(path + ":" + std::to_string(lineno) + ": non-numeric cell");
      (j < d ? xs : ys).push_back(v);
    }
    if (has_z) {
      if (!parse_number(cells.back(), v)) throw DataError(path + ":" + std::to_string(lineno) + ": bad latent label");
      zs.push_back(static_cast<int>(v));
    }
  }
  Dataset data;
  const auto n = static_cast<Eigen::Index>(ys.size());
  if (n == 0) throw DataError("dataset '" + path + "' has no rows");
  data.x = Eigen::Map<RowMatrix>(xs.data(), n, d);
  data.y = Eigen::Map<Vector>(ys.data(), n);
  if (has_z) data.z = std::move(zs);
  return data;
}

inline Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Json vector_to_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline Matrix matrix_from_json(const Json& j, Eigen::Index cols, const std::string& what) {
  if (!j.is_array()) throw ConfigError(what + " must be an array of rows");
  Matrix m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_array() || static_cast<Eigen::Index>(j[i].size()) != cols)
      throw ConfigError(what + ": every row must have " + std::to_string(cols) + " entries");
    for (std::size_t c = 0; c < j[i].size(); ++c) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = j[i][c].get<double>();
  }
  return m;
}

inline Vector vector_from_json(const Json& j, const std::string& what) {
  if (!j.is_array()) throw ConfigError(what + " must be an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

inline Json input_to_json(const InputDistribution& dist) {
  if (dist.kind == InputKind::StandardGaussian) return {{"kind", "gaussian"}, {"d", dist.d}};
  return {{"kind", "gmm"}, {"d", dist.d}, {"weights", vector_to_json(dist.weights)}, {"means", matrix_to_json(dist.means)}};
}

inline InputDistribution input_from_json(const Json& j, Eigen::Index d) {
  const std::string kind = j.value("kind", "gaussian");
  if (kind == "gaussian") return InputDistribution::standard_gaussian(d);
  if (kind == "gmm") {
    if (!j.contains("weights") || !j.contains("means")) throw ConfigError("gmm input needs weights and means");
    return InputDistribution::gaussian_mixture(vector_from_json(j["weights"], "input.weights"),
                                               matrix_from_json(j["means"], d, "input.means"));
  }
  throw ConfigError("unknown input kind '" + kind + "' (expected gaussian or gmm)");
}

/// Model JSON: {k, d, sigma, activation, a, w, radius}.
inline Json model_to_json(const MoeModel& m) {
  return {{"k", m.k()},          {"d", m.d()},           {"sigma", m.sigma}, {"activation", m.activation.name()},
          {"a", matrix_to_json(m.a)}, {"w", matrix_to_json(m.w)}, {"radius", m.radius}};
}

inline MoeModel model_from_json(const Json& j) {
  try {
    MoeModel m;
    const auto k = j.at("k").get<Eigen::Index>();
    const auto d = j.at("d").get<Eigen::Index>();
    m.sigma = j.at("sigma").get<double>();
    m.activation = Activation::from_name(j.at("activation").get<std::string>());
    m.radius = j.value("radius", 1.0);
    m.a = matrix_from_json(j.at("a"), d, "model.a");
    m.w = matrix_from_json(j.at("w"), d, "model.w");
    if (m.a.rows() != k) throw ConfigError("model.a must have k rows");
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model JSON: ") + e.what());
  }
}

inline Json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open '" + path + "'");
  try {
    return Json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

inline void write_json_file(const std::string& path, const Json& j) {
  std::ofstream os = open_output(path);
  os << j.dump(2) << '\n';
}

/// Trace CSV: iter,step_norm,q_value,dist_to_truth[,loglik].
inline void write_trace_csv(const std::string& path, const std::vector<TraceRecord>& trace, bool with_loglik) {
  std::ofstream os = open_output(path);
  os << "iter,step_norm,q_value,dist_to_truth" << (with_loglik ? ",loglik" : "") << '\n';
  for (const auto& r : trace) {
    os << r.iter << ',' << format_number(r.step_norm) << ',' << format_number(r.q_value) << ','
       << format_number(r.dist_to_truth);
    if (with_loglik) os << ',' << format_number(r.loglik);
    os << '\n';
  }
}

inline Json trace_to_json(const std::vector<TraceRecord>& trace) {
  Json out = Json::array();
  auto num = [](double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); };
  for (const auto& r : trace)
    out.push_back({{"iter", r.iter}, {"step_norm", num(r.step_norm)}, {"q_value", num(r.q_value)},
                   {"dist_to_truth", num(r.dist_to_truth)}, {"loglik", num(r.loglik)}});
  return out;
}

}  // namespace moe
