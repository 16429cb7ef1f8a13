#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "bento/common.hpp"

namespace bento {

/**
 * Flat run configuration. Every field has a default; file values override.
 * Unknown keys are hard errors so experiment typos fail fast.
 */
struct RunConfig {
  uint64_t seed = 1;
  int canvas = 64;
  int z_dim = 64;
  int stages = 4;
  int base_res = 8;
  int d_text = 64;
  int max_len = 16;
  double lr = 2e-4;
  double lr_d = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double w_layout = 1.0;
  double w_image = 1.0;
  double w_stn = 1.0;
  double w_id = 1.0;
  double w_cycle = 1.0;
  int steps = 2000;
  int batch_size = 4;
  int holdout = 0;  // scenes reserved from the tail of the dataset for validation
  int checkpoint_every = 500;
  int stn_pretrain_steps = 0;  // > 0 trains the composition net alone first
  int eval_every = 25;
  double target_iou = 0.55;
  double target_cycle_frac = 0.4;
  double target_caption_acc = 0.95;
  std::string data_dir;
  std::string out_dir;

  void set(const std::string& key, const std::string& value);
  std::string echo() const;

  static RunConfig from_file(const std::string& path);

  /// FNV-1a over the echoed text; resumes refuse on mismatch. Directory
  /// paths are environment, not experiment identity, so they are skipped:
  /// the same run must hash equally wherever its data and outputs live.
  uint64_t hash() const {
    uint64_t h = 1469598103934665603ull;
    std::istringstream lines(echo());
    std::string line;
    while (std::getline(lines, line)) {
      if (line.rfind("data_dir ", 0) == 0 || line.rfind("out_dir ", 0) == 0)
        continue;
      for (unsigned char c : line) {
        h ^= c;
        h *= 1099511628211ull;
      }
      h ^= '\n';
      h *= 1099511628211ull;
    }
    return h;
  }
};

namespace detail {

inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "seed",          "canvas",
      "z_dim",         "stages",
      "base_res",      "d_text",
      "max_len",       "lr",
      "lr_d",          "beta1",
      "beta2",         "w_layout",
      "w_image",       "w_stn",
      "w_id",          "w_cycle",
      "steps",         "batch_size",
      "holdout",       "checkpoint_every",
      "stn_pretrain_steps", "eval_every",
      "target_iou",    "target_cycle_frac",
      "target_caption_acc", "data_dir",
      "out_dir",
  };
  return keys;
}

inline double parse_double(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ValueError("config: key '" + key + "' expects a number, got '" + value + "'");
  }
}

inline int parse_int(const std::string& key, const std::string& value) {
  const double v = parse_double(key, value);
  const int i = int(v);
  if (double(i) != v)
    throw ValueError("config: key '" + key + "' expects an integer, got '" + value + "'");
  return i;
}

inline uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const uint64_t v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ValueError("config: key '" + key + "' expects an unsigned integer, got '" +
                     value + "'");
  }
}

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string strip(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace detail

inline void RunConfig::set(const std::string& key, const std::string& value) {
  using detail::parse_double;
  using detail::parse_int;
  using detail::parse_u64;
  if (key == "seed") seed = parse_u64(key, value);
  else if (key == "canvas") canvas = parse_int(key, value);
  else if (key == "z_dim") z_dim = parse_int(key, value);
  else if (key == "stages") stages = parse_int(key, value);
  else if (key == "base_res") base_res = parse_int(key, value);
  else if (key == "d_text") d_text = parse_int(key, value);
  else if (key == "max_len") max_len = parse_int(key, value);
  else if (key == "lr") lr = parse_double(key, value);
  else if (key == "lr_d") lr_d = parse_double(key, value);
  else if (key == "beta1") beta1 = parse_double(key, value);
  else if (key == "beta2") beta2 = parse_double(key, value);
  else if (key == "w_layout") w_layout = parse_double(key, value);
  else if (key == "w_image") w_image = parse_double(key, value);
  else if (key == "w_stn") w_stn = parse_double(key, value);
  else if (key == "w_id") w_id = parse_double(key, value);
  else if (key == "w_cycle") w_cycle = parse_double(key, value);
  else if (key == "steps") steps = parse_int(key, value);
  else if (key == "batch_size") batch_size = parse_int(key, value);
  else if (key == "holdout") holdout = parse_int(key, value);
  else if (key == "checkpoint_every") checkpoint_every = parse_int(key, value);
  else if (key == "stn_pretrain_steps") stn_pretrain_steps = parse_int(key, value);
  else if (key == "eval_every") eval_every = parse_int(key, value);
  else if (key == "target_iou") target_iou = parse_double(key, value);
  else if (key == "target_cycle_frac") target_cycle_frac = parse_double(key, value);
  else if (key == "target_caption_acc") target_caption_acc = parse_double(key, value);
  else if (key == "data_dir") data_dir = value;
  else if (key == "out_dir") out_dir = value;
  else {
    std::string msg = "config: unknown key '" + key + "'; valid keys:";
    for (const auto& k : detail::config_keys()) msg += " " + k;
    throw ValueError(msg);
  }
}

inline std::string RunConfig::echo() const {
  using detail::fmt_double;
  std::ostringstream out;
  out << "seed = " << seed << "\n";
  out << "canvas = " << canvas << "\n";
  out << "z_dim = " << z_dim << "\n";
  out << "stages = " << stages << "\n";
  out << "base_res = " << base_res << "\n";
  out << "d_text = " << d_text << "\n";
  out << "max_len = " << max_len << "\n";
  out << "lr = " << fmt_double(lr) << "\n";
  out << "lr_d = " << fmt_double(lr_d) << "\n";
  out << "beta1 = " << fmt_double(beta1) << "\n";
  out << "beta2 = " << fmt_double(beta2) << "\n";
  out << "w_layout = " << fmt_double(w_layout) << "\n";
  out << "w_image = " << fmt_double(w_image) << "\n";
  out << "w_stn = " << fmt_double(w_stn) << "\n";
  out << "w_id = " << fmt_double(w_id) << "\n";
  out << "w_cycle = " << fmt_double(w_cycle) << "\n";
  out << "steps = " << steps << "\n";
  out << "batch_size = " << batch_size << "\n";
  out << "holdout = " << holdout << "\n";
  out << "checkpoint_every = " << checkpoint_every << "\n";
  out << "stn_pretrain_steps = " << stn_pretrain_steps << "\n";
  out << "eval_every = " << eval_every << "\n";
  out << "target_iou = " << fmt_double(target_iou) << "\n";
  out << "target_cycle_frac = " << fmt_double(target_cycle_frac) << "\n";
  out << "target_caption_acc = " << fmt_double(target_caption_acc) << "\n";
  out << "data_dir = " << data_dir << "\n";
  out << "out_dir = " << out_dir << "\n";
  return out.str();
}

inline RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config: " + path);
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const size_t hash_at = line.find('#');
    if (hash_at != std::string::npos) line = line.substr(0, hash_at);
    line = detail::strip(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ValueError("config: " + path + ":" + std::to_string(lineno) +
                       ": expected 'key = value', got '" + line + "'");
    cfg.set(detail::strip(line.substr(0, eq)), detail::strip(line.substr(eq + 1)));
  }
  return cfg;
}

}  // namespace bento
