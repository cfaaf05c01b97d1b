#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <openssl/evp.h>

#include "json.hpp"

#include "gchain/errors.hpp"
#include "gchain/metric.hpp"

namespace gchain {

using Json = nlohmann::json;

/// %.12g rendering used for every number written to disk.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

/// Rounds every float in `j` to 12 significant digits; non-finite values
/// become the strings "inf", "-inf", "nan".
inline Json canonical_json(const Json& j) {
  if (j.is_object()) {
    Json out = Json::object();
    for (const auto& [k, v] : j.items()) out[k] = canonical_json(v);
    return out;
  }
  if (j.is_array()) {
    Json out = Json::array();
    for (const auto& v : j) out.push_back(canonical_json(v));
    return out;
  }
  if (j.is_number_float()) {
    const double v = j.get<double>();
    if (!std::isfinite(v)) return format_number(v);
    return std::stod(format_number(v));
  }
  return j;
}

/// Sorted keys (nlohmann objects are ordered maps), two-space indent, trailing newline.
inline std::string dump_json(const Json& j) { return canonical_json(j).dump(2) + "\n"; }

/// Write via a temporary file and rename, so readers never see partial output.
inline void write_atomic(const std::filesystem::path& path, std::string_view content) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw DataError("cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw DataError("cannot move output into place: " + path.string());
  }
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Git blob id: SHA-1 of "blob <size>\0" followed by the content.
inline std::string git_blob_hash(std::string_view content) {
  const std::string header = "blob " + std::to_string(content.size()) + std::string(1, '\0');
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw NumericError("hash context allocation failed");
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, md, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw NumericError("hash computation failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

/// A CSV table. Cells are numbers (written with 12 significant digits) or text.
struct Table {
  using Cell = std::variant<double, long long, std::string>;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  void add(std::vector<Cell> row) {
    if (row.size() != columns.size()) throw ArgumentError("table row has the wrong number of cells");
    rows.push_back(std::move(row));
  }

  [[nodiscard]] std::string to_csv() const {
    std::string out;
    for (std::size_t c = 0; c < columns.size(); ++c) out += (c ? "," : "") + columns[c];
    out += "\n";
    for (const auto& row : rows) {
      for (std::size_t c = 0; c < row.size(); ++c) {
        if (c) out += ",";
        if (const auto* d = std::get_if<double>(&row[c])) out += format_number(*d);
        else if (const auto* i = std::get_if<long long>(&row[c])) out += std::to_string(*i);
        else out += std::get<std::string>(row[c]);
      }
      out += "\n";
    }
    return out;
  }
};

/// Numeric CSV: rows of comma-separated numbers. A first line that does not
/// parse as numbers is treated as a header and skipped.
inline std::vector<std::vector<double>> parse_numeric_csv(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<double> row;
    std::istringstream cells(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(cells, cell, ',')) {
      try {
        std::size_t used = 0;
        const double v = std::stod(cell, &used);
        if (cell.find_first_not_of(" \t", used) != std::string::npos) numeric = false;
        row.push_back(v);
      } catch (const std::exception&) {
        numeric = false;
      }
    }
    if (!numeric) {
      if (first) {
        first = false;
        continue;
      }
      throw DataError("non-numeric CSV cell in line: " + line);
    }
    first = false;
    rows.push_back(std::move(row));
  }
  return rows;
}

inline DistanceMatrix read_distance_csv(const std::filesystem::path& path) {
  const auto rows = parse_numeric_csv(read_file(path));
  if (rows.empty()) throw DataError("distance matrix file is empty: " + path.string());
  return DistanceMatrix::from_rows(rows);
}

inline std::string matrix_to_csv(const std::vector<std::vector<double>>& rows) {
  std::string out;
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) out += (c ? "," : "") + format_number(r[c]);
    out += "\n";
  }
  return out;
}

}  // namespace gchain
