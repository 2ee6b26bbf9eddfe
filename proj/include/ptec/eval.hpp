#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "ptec/metrics.hpp"
#include "ptec/objective.hpp"
#include "ptec/optim.hpp"

namespace ptec {

/// Per-source loss trajectory under step-wise adaptation from a checkpoint.
struct AdaptationReport {
  std::string label;
  int source_id = 0;
  std::vector<double> trajectory;  // length steps + 1
  double lr = 0.0;
  int steps = 0;
  ParamVector final_params;
};

inline double mean_loss_over(const SourceObjective& obj, const ParamVector& p,
                             const std::vector<Batch>& batches) {
  if (batches.empty())
    throw ContractViolation("mean_loss_over: no evaluation batches");
  double s = 0.0;
  for (const Batch& b : batches) s += obj.loss(p, b);
  return s / static_cast<double>(batches.size());
}

/// Runs `steps` of plain GD from theta on the source's training batches,
/// recording the held-out loss before adaptation and after each step.
/// theta itself is unmodified.
inline AdaptationReport adapt_and_eval(const ParamVector& theta,
                                       const SourceObjective& obj, int steps,
                                       double lr,
                                       const std::vector<Batch>& train_batches,
                                       const std::vector<Batch>& eval_batches,
                                       const std::string& label = "") {
  if (steps < 0) throw ContractViolation("adapt_and_eval: steps must be >= 0");
  if (steps > 0 && train_batches.empty())
    throw ContractViolation("adapt_and_eval: no training batches");
  AdaptationReport rep;
  rep.label = label;
  rep.source_id = obj.source_id();
  rep.lr = lr;
  rep.steps = steps;
  ParamVector phi = theta;
  rep.trajectory.push_back(mean_loss_over(obj, phi, eval_batches));
  for (int s = 0; s < steps; ++s) {
    const Batch& b = train_batches[static_cast<std::size_t>(s) % train_batches.size()];
    const GradVector g = obj.grad(phi, b);
    phi = sgd_step(phi, g, lr);
    const double l = mean_loss_over(obj, phi, eval_batches);
    if (!std::isfinite(l))
      throw NumericalError("adapt_and_eval: non-finite loss after step " +
                           std::to_string(s + 1));
    rep.trajectory.push_back(l);
  }
  rep.final_params = std::move(phi);
  return rep;
}

/// Unweighted mean over sources of the final-trajectory loss.
inline double mean_post_adaptation_loss(
    const std::vector<AdaptationReport>& reports) {
  if (reports.empty())
    throw ContractViolation("mean_post_adaptation_loss: empty report list");
  double s = 0.0;
  for (const auto& r : reports) {
    if (r.steps != reports.front().steps)
      throw ContractViolation("mean_post_adaptation_loss: mixed step counts");
    s += r.trajectory.back();
  }
  return s / static_cast<double>(reports.size());
}

struct RunComparison {
  std::vector<std::pair<int, double>> deltas;  // source_id -> A - B
  double mean_delta = 0.0;
  int wins_a = 0;  // sources where A's final loss is strictly lower
};

inline RunComparison compare_runs(const std::vector<AdaptationReport>& a,
                                  const std::vector<AdaptationReport>& b) {
  if (a.size() != b.size())
    throw ContractViolation("compare_runs: source-set size mismatch");
  RunComparison out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].source_id != b[i].source_id || a[i].steps != b[i].steps)
      throw ContractViolation("compare_runs: source/steps mismatch at index " +
                              std::to_string(i));
    const double d = a[i].trajectory.back() - b[i].trajectory.back();
    out.deltas.emplace_back(a[i].source_id, d);
    out.mean_delta += d;
    if (d < 0.0) ++out.wins_a;
  }
  out.mean_delta /= static_cast<double>(a.size());
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O
//
// Layout: 8-byte magic "PTECCKPT", 4-byte LE version (=1), 8-byte LE header
// length, UTF-8 JSON header, then dim x 8-byte LE IEEE-754 reals.
// ---------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[8] = {'P', 'T', 'E', 'C',
                                             'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string model_kind;
  int epoch = 0;
  std::string round_label;
  std::uint64_t seed = 0;
  std::string config_digest;
  ParamVector params;
};

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  nlohmann::json header{{"model_kind", ckpt.model_kind},
                        {"dim", ckpt.params.dim()},
                        {"epoch", ckpt.epoch},
                        {"round_label", ckpt.round_label},
                        {"seed", ckpt.seed},
                        {"config_digest", ckpt.config_digest}};
  const std::string hs = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("save_checkpoint: cannot open " + path);
  out.write(kCheckpointMagic, 8);
  const std::uint32_t version = kCheckpointVersion;
  out.write(reinterpret_cast<const char*>(&version), 4);
  const std::uint64_t hlen = hs.size();
  out.write(reinterpret_cast<const char*>(&hlen), 8);
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  out.write(reinterpret_cast<const char*>(ckpt.params.values.data()),
            static_cast<std::streamsize>(ckpt.params.dim() * 8));
  out.flush();
  if (!out) throw Error("save_checkpoint: write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("load_checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw FormatError("load_checkpoint: bad magic in " + path);
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  if (!in || version != kCheckpointVersion)
    throw VersionError("load_checkpoint: unsupported version " +
                       std::to_string(version));
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 8);
  if (!in) throw FormatError("load_checkpoint: truncated header length");
  std::string hs(hlen, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw FormatError("load_checkpoint: truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("load_checkpoint: bad header JSON: ") +
                      e.what());
  }
  Checkpoint ckpt;
  try {
    ckpt.model_kind = header.at("model_kind").get<std::string>();
    ckpt.epoch = header.at("epoch").get<int>();
    ckpt.round_label = header.at("round_label").get<std::string>();
    ckpt.seed = header.at("seed").get<std::uint64_t>();
    ckpt.config_digest = header.at("config_digest").get<std::string>();
    const auto dim = header.at("dim").get<std::uint64_t>();
    ckpt.params = ParamVector(static_cast<std::size_t>(dim));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("load_checkpoint: incomplete header: ") +
                      e.what());
  }
  const std::streamsize want =
      static_cast<std::streamsize>(ckpt.params.dim() * 8);
  in.read(reinterpret_cast<char*>(ckpt.params.values.data()), want);
  if (in.gcount() != want)
    throw CorruptionError("load_checkpoint: payload truncated, expected " +
                          std::to_string(want) + " bytes, got " +
                          std::to_string(in.gcount()));
  char extra;
  if (in.read(&extra, 1))
    throw CorruptionError("load_checkpoint: trailing bytes after payload");
  return ckpt;
}

}  // namespace ptec
