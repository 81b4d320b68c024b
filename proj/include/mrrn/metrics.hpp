#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mrrn/phantom.hpp"
#include "mrrn/tensor.hpp"

namespace mrrn {

// Dice similarity coefficient 2|A∩B| / (|A|+|B|) for one label. Both masks
// empty for the label -> 1.0 (structure correctly absent); one empty -> 0.0.
inline double dsc(const LabelMask& pred, const LabelMask& gt, int label) {
  if (pred.n != gt.n || pred.h != gt.h || pred.w != gt.w)
    throw std::invalid_argument("dsc: mask shape mismatch (" + std::to_string(pred.n) + "," +
                                std::to_string(pred.h) + "," + std::to_string(pred.w) + ") vs (" +
                                std::to_string(gt.n) + "," + std::to_string(gt.h) + "," +
                                std::to_string(gt.w) + ")");
  if (label < 1 || label > 5) throw std::invalid_argument("dsc: label must be in 1..5");
  long inter = 0, np = 0, ng = 0;
  for (std::size_t i = 0; i < pred.labels.size(); ++i) {
    const bool p = pred.labels[i] == label;
    const bool g = gt.labels[i] == label;
    np += p;
    ng += g;
    inter += (p && g);
  }
  if (np + ng == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(np + ng);
}

struct DSCStats {
  std::vector<double> values;  // per-case
  double median = 0, q1 = 0, q3 = 0, mean = 0, stddev = 0;  // population std
};

namespace detail {

// linear interpolation between order statistics of a sorted vector
inline double percentile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace detail

inline DSCStats aggregate(const std::vector<double>& per_case) {
  if (per_case.empty()) throw std::invalid_argument("aggregate: no cases");
  DSCStats st;
  st.values = per_case;
  std::vector<double> sorted = per_case;
  std::sort(sorted.begin(), sorted.end());
  st.median = detail::percentile_sorted(sorted, 0.5);
  st.q1 = detail::percentile_sorted(sorted, 0.25);
  st.q3 = detail::percentile_sorted(sorted, 0.75);
  double s = 0;
  for (double v : per_case) s += v;
  st.mean = s / static_cast<double>(per_case.size());
  double v2 = 0;
  for (double v : per_case) v2 += (v - st.mean) * (v - st.mean);
  st.stddev = std::sqrt(v2 / static_cast<double>(per_case.size()));
  return st;
}

// Fixed report column order.
inline const std::vector<std::string>& report_structures() {
  static const std::vector<std::string> cols = {"left_lung", "right_lung", "heart", "esophagus",
                                                "spinal_cord"};
  return cols;
}

inline const std::vector<std::string>& report_headers() {
  static const std::vector<std::string> cols = {"Left Lung", "Right Lung", "Heart", "Esophagus",
                                                "Spinal Cord"};
  return cols;
}

using MethodStats = std::map<std::string, DSCStats>;  // structure -> stats

enum class TableFormat { text, csv };

inline std::string format_mean_std(double mean, double stddev) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << mean << " ± " << stddev;
  return os.str();
}

// One row per method, mean ± std per structure. CSV variant carries the full
// statistic set (population std).
inline std::string emit_table(const std::vector<std::pair<std::string, MethodStats>>& methods,
                              TableFormat format) {
  for (const auto& [method, stats] : methods) {
    for (const auto& s : report_structures()) {
      if (!stats.count(s))
        throw std::invalid_argument("emit_table: method '" + method + "' is missing structure '" +
                                    s + "'");
    }
  }
  std::ostringstream os;
  if (format == TableFormat::csv) {
    os << "method,structure,n,mean,std,median,q1,q3\n";
    for (const auto& [method, stats] : methods) {
      for (const auto& s : report_structures()) {
        const auto& st = stats.at(s);
        os << method << "," << s << "," << st.values.size() << "," << std::setprecision(10)
           << st.mean << "," << st.stddev << "," << st.median << "," << st.q1 << "," << st.q3
           << "\n";
      }
    }
    return os.str();
  }
  os << "DSC (mean ± population std) per structure\n";
  os << std::left << std::setw(16) << "Method";
  for (const auto& h : report_headers()) os << std::setw(14) << h;
  os << "\n";
  for (const auto& [method, stats] : methods) {
    os << std::left << std::setw(16) << method;
    for (const auto& s : report_structures()) {
      const auto& st = stats.at(s);
      os << std::setw(14) << format_mean_std(st.mean, st.stddev);
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace mrrn
