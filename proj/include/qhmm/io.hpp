#pragma once

// JSON encoding of instruments and FCS models, number formatting for CSV, and
// write-then-rename file output.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "qhmm/instrument.hpp"

namespace qhmm::io {

using Json = nlohmann::json;

/// Shortest round-trippable decimal form.
inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace detail {

inline Complex complex_from_json(const Json& j, const std::string& where) {
  if (j.is_number()) return {j.get<double>(), 0.0};
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    fail(ErrorKind::invalid_input, where + ": complex numbers must be [re, im] pairs");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline Matrix matrix_from_json(const Json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) fail(ErrorKind::invalid_input, where + ": expected a non-empty array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (!j[0].is_array() || j[0].empty()) fail(ErrorKind::invalid_input, where + ": rows must be non-empty arrays");
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      fail(ErrorKind::invalid_input, where + ": ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = complex_from_json(row[static_cast<std::size_t>(c)], where);
  }
  return m;
}

inline Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back({m(r, c).real(), m(r, c).imag()});
    rows.push_back(std::move(row));
  }
  return rows;
}

template <class T>
T required(const Json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) fail(ErrorKind::invalid_input, where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorKind::invalid_input, where + ": field '" + key + "' has the wrong type");
  }
}

}  // namespace detail

inline Instrument instrument_from_json(const Json& j) {
  const auto d = detail::required<std::size_t>(j, "dim", "instrument");
  if (!j.contains("outcomes") || !j["outcomes"].is_array())
    fail(ErrorKind::invalid_input, "instrument: 'outcomes' must be an array");
  std::vector<Outcome> outcomes;
  std::size_t index = 0;
  for (const Json& o : j["outcomes"]) {
    const std::string where = "outcome " + std::to_string(index++);
    Outcome out;
    out.label = o.contains("label") ? detail::required<std::string>(o, "label", where) : std::to_string(index - 1);
    out.value = detail::required<double>(o, "value", where);
    if (!o.contains("kraus") || !o["kraus"].is_array() || o["kraus"].empty())
      fail(ErrorKind::invalid_input, where + ": 'kraus' must be a non-empty array of matrices");
    for (const Json& k : o["kraus"]) out.kraus.push_back(detail::matrix_from_json(k, where));
    outcomes.push_back(std::move(out));
  }
  std::optional<Matrix> init;
  if (j.contains("initial_state") && !j["initial_state"].is_null())
    init = detail::matrix_from_json(j["initial_state"], "initial_state");
  return Instrument(d, std::move(outcomes), std::move(init));
}

inline Json instrument_to_json(const Instrument& instr) {
  Json j;
  j["dim"] = instr.dim();
  Json outs = Json::array();
  for (const Outcome& o : instr.outcomes()) {
    Json k = Json::array();
    for (const Matrix& m : o.kraus) k.push_back(detail::matrix_to_json(m));
    outs.push_back({{"label", o.label}, {"value", o.value}, {"kraus", std::move(k)}});
  }
  j["outcomes"] = std::move(outs);
  if (instr.declared_initial_state()) j["initial_state"] = detail::matrix_to_json(*instr.declared_initial_state());
  return j;
}

/// FCS layout: { "hidden_dim", "output_dim", "gamma_kraus": [matrices], "observable": matrix, "initial_state"? }.
inline FcsModel fcs_from_json(const Json& j) {
  const auto dh = detail::required<std::size_t>(j, "hidden_dim", "fcs");
  const auto dk = detail::required<std::size_t>(j, "output_dim", "fcs");
  if (!j.contains("gamma_kraus") || !j["gamma_kraus"].is_array() || j["gamma_kraus"].empty())
    fail(ErrorKind::invalid_input, "fcs: 'gamma_kraus' must be a non-empty array of matrices");
  std::vector<Matrix> kraus;
  for (const Json& k : j["gamma_kraus"]) kraus.push_back(detail::matrix_from_json(k, "gamma_kraus"));
  for (const Matrix& k : kraus)
    if (static_cast<std::size_t>(k.rows()) != dk * dh || static_cast<std::size_t>(k.cols()) != dh)
      fail(ErrorKind::invalid_input, "fcs: each gamma Kraus operator must map H to K (x) H");
  if (!j.contains("observable")) fail(ErrorKind::invalid_input, "fcs: missing field 'observable'");
  const Matrix a = detail::matrix_from_json(j["observable"], "observable");
  std::optional<Matrix> init;
  if (j.contains("initial_state") && !j["initial_state"].is_null())
    init = detail::matrix_from_json(j["initial_state"], "initial_state");
  return FcsModel{dh, dk, SuperOperator::from_kraus(kraus), HermitianOperator(a), std::move(init)};
}

inline Json fcs_to_json(const FcsModel& model) {
  const std::vector<Matrix> kraus = model.gamma.kraus() ? *model.gamma.kraus() : kraus_from_choi(model.gamma);
  Json j;
  j["hidden_dim"] = model.hidden_dim;
  j["output_dim"] = model.output_dim;
  Json k = Json::array();
  for (const Matrix& m : kraus) k.push_back(detail::matrix_to_json(m));
  j["gamma_kraus"] = std::move(k);
  j["observable"] = detail::matrix_to_json(model.observable.matrix());
  if (model.initial_state) j["initial_state"] = detail::matrix_to_json(*model.initial_state);
  return j;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::invalid_input, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Json parse_json(const std::string& text, const std::string& where) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::invalid_input, where + ": " + e.what());
  }
}

inline Instrument load_instrument(const std::filesystem::path& path) {
  return instrument_from_json(parse_json(read_file(path), path.string()));
}

inline FcsModel load_fcs(const std::filesystem::path& path) {
  return fcs_from_json(parse_json(read_file(path), path.string()));
}

/// Writes to a sibling temporary and renames it into place, so readers never
/// observe a partial file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::invalid_input, "cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      fail(ErrorKind::invalid_input, "write failed for '" + path.string() + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    fail(ErrorKind::invalid_input, "cannot move output into '" + path.string() + "'");
  }
}

}  // namespace qhmm::io
