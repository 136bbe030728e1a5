#include "mmcoord/db_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace mmcoord {

namespace {

using nlohmann::json;

constexpr const char* kFormat = "mmcoord-fingerprint-db";
constexpr int kVersion = 1;

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

// Entries equal to `null_value` are written as JSON null.
json matrix_to_json(const Eigen::MatrixXi& m, int null_value) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (m(r, c) == null_value) row.push_back(nullptr);
      else row.push_back(m(r, c));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void check_shape(const json& j, Eigen::Index rows, Eigen::Index cols, const char* name) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
    throw std::runtime_error(std::string("DB field '") + name + "' has the wrong number of rows");
  for (const json& row : j)
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw std::runtime_error(std::string("DB field '") + name + "' has a row of the wrong length");
}

Eigen::MatrixXd json_to_matrixd(const json& j, Eigen::Index rows, Eigen::Index cols, const char* name) {
  check_shape(j, rows, cols, name);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  return m;
}

Eigen::MatrixXi json_to_matrixi(const json& j, Eigen::Index rows, Eigen::Index cols, int null_value,
                                const char* name) {
  check_shape(j, rows, cols, name);
  Eigen::MatrixXi m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[r][c].is_null() ? null_value : j[r][c].get<int>();
  return m;
}

}  // namespace

std::string checksum_hex(std::uint64_t checksum) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(checksum));
  return buf;
}

std::string serialize_db(const FingerprintDB& db) {
  json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["env_checksum"] = checksum_hex(db.env_checksum);
  j["num_lps"] = db.num_lps();
  j["num_aps"] = db.num_aps();
  j["psi"] = matrix_to_json(db.psi);
  j["phi"] = matrix_to_json(db.phi, kNullSector);
  j["p_off"] = matrix_to_json(db.p_off);
  j["mcs_off"] = matrix_to_json(db.mcs_off, kNoMcs);
  json exemplars = json::array();
  for (const auto& [key, vectors] : db.exemplars)
    exemplars.push_back({{"ap", key.ap}, {"sector", key.sector}, {"vectors", matrix_to_json(vectors)}});
  j["exemplars"] = std::move(exemplars);
  json clusters = json::array();
  for (const auto& [key, values] : db.mcs_clusters)
    clusters.push_back({{"ap", key.ap}, {"sector", key.sector}, {"mcs", values}});
  j["mcs_clusters"] = std::move(clusters);
  return j.dump(1) + "\n";
}

FingerprintDB deserialize_db(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("DB file is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != kFormat) throw std::runtime_error("not a fingerprint DB file");
    if (j.at("version").get<int>() != kVersion) throw std::runtime_error("unsupported DB file version");
    FingerprintDB db;
    db.env_checksum = std::stoull(j.at("env_checksum").get<std::string>(), nullptr, 16);
    const Eigen::Index L = j.at("num_lps").get<int>();
    const Eigen::Index M = j.at("num_aps").get<int>();
    db.psi = json_to_matrixd(j.at("psi"), L, M, "psi");
    db.phi = json_to_matrixi(j.at("phi"), L, M, kNullSector, "phi");
    db.p_off = json_to_matrixd(j.at("p_off"), L, M, "p_off");
    db.mcs_off = json_to_matrixi(j.at("mcs_off"), L, M, kNoMcs, "mcs_off");
    for (const json& e : j.at("exemplars")) {
      const json& vectors = e.at("vectors");
      db.exemplars[{e.at("ap").get<int>(), e.at("sector").get<int>()}] =
          json_to_matrixd(vectors, static_cast<Eigen::Index>(vectors.size()), M, "exemplars");
    }
    for (const json& e : j.at("mcs_clusters"))
      db.mcs_clusters[{e.at("ap").get<int>(), e.at("sector").get<int>()}] = e.at("mcs").get<std::vector<int>>();
    return db;
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("malformed DB file: ") + e.what());
  }
}

void save_db(const FingerprintDB& db, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << serialize_db(db);
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

FingerprintDB load_db(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open DB file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_db(ss.str());
}

}  // namespace mmcoord
