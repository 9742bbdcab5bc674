#pragma once

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "common.hpp"
#include "inference.hpp"
#include "model.hpp"

namespace vlgp::io {

class IoError : public Error {
 public:
  using Error::Error;
};

struct Table {
  std::vector<std::string> columns;
  Eigen::MatrixXd values;  // rows x columns

  [[nodiscard]] Index find(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return static_cast<Index>(i);
    return -1;
  }
  [[nodiscard]] Eigen::VectorXd column(const std::string& name) const {
    const Index c = find(name);
    if (c < 0) throw IoError("missing column '" + name + "'");
    return values.col(c);
  }
  /// Columns x1, x2, ... in order, as many as are present.
  [[nodiscard]] Eigen::MatrixXd coordinates() const {
    Index d = 0;
    while (find("x" + std::to_string(d + 1)) >= 0) ++d;
    if (d == 0) throw IoError("no coordinate columns (expected x1, x2, ...)");
    Eigen::MatrixXd out(values.rows(), d);
    for (Index k = 0; k < d; ++k) out.col(k) = values.col(find("x" + std::to_string(k + 1)));
    return out;
  }
};

namespace detail {
inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const auto a = cell.find_first_not_of(" \t\r");
    const auto b = cell.find_last_not_of(" \t\r");
    out.push_back(a == std::string::npos ? std::string() : cell.substr(a, b - a + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}
}  // namespace detail

/// Comma-separated numeric table with a header row. An empty file, or a
/// header with no rows, gives an empty table.
inline Table read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  Table t;
  std::string line;
  if (!std::getline(in, line)) return t;
  t.columns = detail::split(line);
  std::vector<double> flat;
  Index rows = 0;
  Index lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = detail::split(line);
    if (cells.size() != t.columns.size())
      throw IoError(path + ":" + std::to_string(lineno) + ": expected " +
                    std::to_string(t.columns.size()) + " fields");
    for (const auto& c : cells) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(c, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != c.size())
        throw IoError(path + ":" + std::to_string(lineno) + ": not a number: '" + c + "'");
      flat.push_back(v);
    }
    ++rows;
  }
  const auto cols = static_cast<Index>(t.columns.size());
  t.values.resize(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) t.values(r, c) = flat[r * cols + c];
  return t;
}

inline void write_csv(const std::string& path, const std::vector<std::string>& columns,
                      const Eigen::MatrixXd& values) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  for (std::size_t i = 0; i < columns.size(); ++i) out << (i ? "," : "") << columns[i];
  out << '\n' << std::setprecision(17);
  for (Index r = 0; r < values.rows(); ++r) {
    for (Index c = 0; c < values.cols(); ++c) out << (c ? "," : "") << values(r, c);
    out << '\n';
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline std::vector<std::string> coordinate_names(Index d) {
  std::vector<std::string> out;
  for (Index k = 1; k <= d; ++k) out.push_back("x" + std::to_string(k));
  return out;
}

inline nlohmann::json to_json(const Eigen::VectorXd& v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Index>(v.size()));
}

inline nlohmann::json to_json(const Theta& th) {
  nlohmann::json j;
  j["likelihood"] = to_string(th.likelihood.family);
  if (th.likelihood.has_param()) j["lik_param"] = th.likelihood.param;
  j["sigma2"] = th.kernel.variance;
  j["range"] = th.kernel.range;
  j["smoothness"] = th.kernel.smoothness;
  j["beta"] = to_json(th.mean.coefficients);
  return j;
}

inline nlohmann::json to_json(const LatentPosterior& p) {
  nlohmann::json j;
  j["alpha"] = to_json(p.alpha);
  j["pseudo_t"] = to_json(p.pseudo.t);
  j["pseudo_d"] = to_json(p.pseudo.d);
  j["iterations"] = p.iterations;
  j["converged"] = p.converged;
  j["last_step"] = p.last_step;
  j["ordering"] = p.ordering.perm;
  j["V_nnz"] = p.V.nnz();
  return j;
}

inline nlohmann::json to_json(const PredictionResult& r) {
  nlohmann::json j;
  j["mean"] = to_json(r.mean);
  j["variance"] = to_json(r.variance);
  j["data_mean"] = to_json(r.data_mean);
  return j;
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << std::setw(2) << j << '\n';
}

inline nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("'" + path + "': " + e.what());
  }
}

}  // namespace vlgp::io
