#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sfm/rng.hpp"
#include "sfm/trainer.hpp"

namespace sfm {

struct MetricsTable {
  std::vector<std::string> columns;  // excluding "step"
  std::vector<int64_t> steps;
  std::vector<std::vector<double>> values;  // values[row][col]
};

inline MetricsTable read_metrics_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open metrics file: " + path);
  MetricsTable t;
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("empty metrics file: " + path);
  {
    std::stringstream ss(line);
    std::string col;
    bool first = true;
    while (std::getline(ss, col, ',')) {
      if (first) {
        if (col != "step") throw std::runtime_error("metrics file must start with a step column");
        first = false;
      } else {
        t.columns.push_back(col);
      }
    }
  }
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    std::getline(ss, tok, ',');
    t.steps.push_back(std::stoll(tok));
    std::vector<double> row;
    while (std::getline(ss, tok, ',')) row.push_back(std::stod(tok));
    if (row.size() != t.columns.size())
      throw std::runtime_error("ragged metrics row in " + path);
    t.values.push_back(std::move(row));
  }
  return t;
}

// Mean and 95% bootstrap confidence interval across seeds, per step and
// metric. Rows are aligned by step; every run must share the schedule.
inline void write_plotdata_csv(const std::string& out_path,
                               const std::vector<MetricsTable>& runs,
                               int n_bootstrap = 1000, uint64_t seed = 12345) {
  if (runs.empty()) throw std::invalid_argument("plotdata: need at least one run");
  for (const auto& r : runs) {
    if (r.steps != runs[0].steps || r.columns != runs[0].columns)
      throw std::runtime_error("plotdata: runs have mismatched schedules or columns");
  }
  std::ofstream f(out_path);
  if (!f) throw std::runtime_error("cannot open plotdata output: " + out_path);
  f << "step";
  for (const auto& c : runs[0].columns) f << "," << c << "_mean," << c << "_lo," << c << "_hi";
  f << "\n";
  Rng rng(seed);
  const int n_runs = static_cast<int>(runs.size());
  for (size_t row = 0; row < runs[0].steps.size(); ++row) {
    f << runs[0].steps[row];
    for (size_t col = 0; col < runs[0].columns.size(); ++col) {
      double mean = 0.0;
      for (const auto& r : runs) mean += r.values[row][col];
      mean /= n_runs;
      std::vector<double> boots(n_bootstrap);
      for (int b = 0; b < n_bootstrap; ++b) {
        double acc = 0.0;
        for (int k = 0; k < n_runs; ++k) acc += runs[rng.uniform_int(n_runs)].values[row][col];
        boots[b] = acc / n_runs;
      }
      std::sort(boots.begin(), boots.end());
      const double lo = boots[static_cast<size_t>(0.025 * (n_bootstrap - 1))];
      const double hi = boots[static_cast<size_t>(0.975 * (n_bootstrap - 1))];
      char buf[128];
      std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g", mean, lo, hi);
      f << buf;
    }
    f << "\n";
  }
}

}  // namespace sfm
