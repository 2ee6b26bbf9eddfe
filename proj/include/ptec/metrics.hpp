#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "ptec/errors.hpp"

namespace ptec {

/// One record per outer iteration.
struct MetricsRecord {
  long iter = 0;
  int epoch = 0;
  double global_loss = 0.0;
  double grad_norm = 0.0;
  double lr_alpha = 0.0;
  double lr_beta = 0.0;
  long degenerate_batches = 0;  // cumulative
  std::vector<std::pair<int, double>> local_losses;  // ascending source_id
};

/// Shortest round-trip decimal rendering.
inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw NumericalError("format_double: to_chars failed");
  return std::string(buf, end);
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw FormatError("parse_double: bad field '" + s + "'");
  return v;
}

/// CSV header: iter,epoch,global_loss,grad_norm,lr_alpha,lr_beta,
/// degenerate_batches, then local_loss_<source_id> ascending.
inline std::size_t write_metrics(const std::string& path,
                                 const std::vector<MetricsRecord>& records) {
  if (records.empty())
    throw ContractViolation("write_metrics: records must be nonempty");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("write_metrics: cannot open " + path);
  out << "iter,epoch,global_loss,grad_norm,lr_alpha,lr_beta,degenerate_batches";
  for (const auto& [id, _] : records.front().local_losses)
    out << ",local_loss_" << id;
  out << "\n";
  for (const auto& r : records) {
    if (r.local_losses.size() != records.front().local_losses.size())
      throw ContractViolation("write_metrics: inconsistent source columns");
    out << r.iter << ',' << r.epoch << ',' << format_double(r.global_loss)
        << ',' << format_double(r.grad_norm) << ',' << format_double(r.lr_alpha)
        << ',' << format_double(r.lr_beta) << ',' << r.degenerate_batches;
    for (const auto& [_, loss] : r.local_losses) out << ',' << format_double(loss);
    out << "\n";
  }
  out.flush();
  if (!out) throw Error("write_metrics: write failed for " + path);
  return records.size();
}

}  // namespace ptec
