#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "bento/types.hpp"

namespace bento {

/// Mean IoU over id-matched box pairs.
inline double mean_iou(const std::vector<LayoutBox>& pred,
                       const std::vector<LayoutBox>& gt) {
  if (pred.size() != gt.size())
    throw ValueError("mean_iou: count mismatch, " + std::to_string(pred.size()) +
                     " vs " + std::to_string(gt.size()));
  if (pred.empty()) throw ValueError("mean_iou: empty box lists");
  double acc = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) acc += iou(pred[i], gt[i]);
  return acc / double(pred.size());
}

/// Append-style CSV metrics log with a fixed header; numbers keep full
/// precision so loss identities survive the round trip.
class CsvLog {
 public:
  CsvLog(const std::string& path, std::vector<std::string> header)
      : path_(path), header_(std::move(header)) {
    std::ofstream f(path_, std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path_);
    for (size_t i = 0; i < header_.size(); ++i)
      f << (i ? "," : "") << header_[i];
    f << "\n";
    if (!f) throw IoError("short write: " + path_);
  }

  /// Reopens an existing log for appending; the header on disk must match.
  static CsvLog append_to(const std::string& path,
                          std::vector<std::string> header) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open for reading: " + path);
    std::string first;
    std::getline(f, first);
    if (!first.empty() && first.back() == '\r') first.pop_back();
    std::string want;
    for (size_t i = 0; i < header.size(); ++i)
      want += (i ? "," : "") + header[i];
    if (first != want)
      throw DataError("csv: header mismatch in " + path + ": file has '" +
                      first + "', expected '" + want + "'");
    return CsvLog(AppendTag{}, path, std::move(header));
  }

  void row(const std::vector<double>& values) {
    if (values.size() != header_.size())
      throw ValueError("csv: row width " + std::to_string(values.size()) +
                       " does not match header width " +
                       std::to_string(header_.size()));
    std::ofstream f(path_, std::ios::app);
    if (!f) throw IoError("cannot append: " + path_);
    char buf[40];
    for (size_t i = 0; i < values.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", values[i]);
      f << (i ? "," : "") << buf;
    }
    f << "\n";
    if (!f) throw IoError("short write: " + path_);
  }

  const std::string& path() const { return path_; }

 private:
  struct AppendTag {};
  CsvLog(AppendTag, const std::string& path, std::vector<std::string> header)
      : path_(path), header_(std::move(header)) {}

  std::string path_;
  std::vector<std::string> header_;
};

struct CsvData {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  int column(const std::string& name) const {
    for (size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return int(i);
    throw ValueError("csv: no column named '" + name + "'");
  }
};

inline CsvData read_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path);
  CsvData out;
  std::string line;
  bool first = true;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (first) {
      out.header = cells;
      first = false;
      continue;
    }
    std::vector<double> row;
    for (const auto& c : cells) {
      try {
        row.push_back(std::stod(c));
      } catch (const std::exception&) {
        throw DataError("csv: bad number '" + c + "' in " + path);
      }
    }
    if (row.size() != out.header.size())
      throw DataError("csv: ragged row in " + path);
    out.rows.push_back(std::move(row));
  }
  if (first) throw DataError("csv: missing header in " + path);
  return out;
}

// ---------------------------------------------------------------------------
// Key/value evaluation reports.

inline std::string format_report(const std::vector<std::pair<std::string, double>>& kv) {
  std::ostringstream out;
  char buf[40];
  for (const auto& [key, value] : kv) {
    std::snprintf(buf, sizeof buf, "%.17g", value);
    out << key << " = " << buf << "\n";
  }
  return out.str();
}

inline std::map<std::string, double> parse_report(const std::string& text) {
  std::map<std::string, double> out;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) throw DataError("report: bad line '" + line + "'");
    std::string key = line.substr(0, eq);
    while (!key.empty() && key.back() == ' ') key.pop_back();
    try {
      out[key] = std::stod(line.substr(eq + 1));
    } catch (const std::exception&) {
      throw DataError("report: bad value in line '" + line + "'");
    }
  }
  return out;
}

}  // namespace bento
