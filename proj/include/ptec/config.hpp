#pragma once

#include <nlohmann/json.hpp>

#include <Eigen/Dense>
#include <fstream>
#include <memory>
#include <set>
#include <string>

#include "ptec/data.hpp"
#include "ptec/hash.hpp"
#include "ptec/masked_model.hpp"
#include "ptec/quadratic.hpp"
#include "ptec/trainer.hpp"

namespace ptec {

using nlohmann::json;

struct MaskedModelSpec {
  int hidden_dim = 16;
  int codebook_size = 256;
  int code_dim = 16;
  MaskSpec mask;  // paper-reported masking defaults
};

struct QuadraticSpec {
  // One entry per source; diag entries and centers, or full matrices.
  std::vector<Eigen::MatrixXd> A;
  std::vector<Eigen::VectorXd> c;
  int samples_per_source = 8;
};

struct AdaptationSettings {
  int steps = 1;
  double lr = 1e-4;
};

struct ExperimentConfig {
  enum class Model { Quadratic, MaskedPrediction };
  Model model = Model::Quadratic;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  SyntheticSpec data;
  QuadraticSpec quadratic;
  MaskedModelSpec masked_model;
  CsslConfig cssl;
  PtecConfig ptec;
  AdaptationSettings adaptation;
  std::string digest;  // content hash of the merged config JSON
};

namespace cfg_detail {

inline void check_keys(const json& j, const std::set<std::string>& allowed,
                       const std::string& where) {
  if (!j.is_object())
    throw ValidationError(where + ": expected a JSON object");
  for (const auto& [k, _] : j.items())
    if (!allowed.count(k))
      throw ValidationError(where + ": unknown field '" + k + "'");
}

template <typename T>
T require(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key))
    throw ValidationError(where + ": missing required field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError(where + ": field '" + key + "' has wrong type");
  }
}

template <typename T>
T get_or(const json& j, const char* key, T def, const std::string& where) {
  if (!j.contains(key)) return def;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError(where + ": field '" + key + "' has wrong type");
  }
}

inline LrSchedule parse_schedule(const json& j, const std::string& where) {
  if (j.is_string()) {
    const auto name = j.get<std::string>();
    // Named presets carrying the reported training schedules.
    if (name == "paper-v-a-cssl") return LrSchedule{2e-4, 60, 1.0 / std::sqrt(2.0), 80};
    if (name == "paper-v-a-alpha") return LrSchedule{1e-4, 40, 1.0 / std::sqrt(2.0), 60};
    if (name == "paper-v-a-beta") return LrSchedule{1e-5, 40, 1.0 / std::sqrt(2.0), 60};
    throw ValidationError(where + ": unknown schedule preset '" + name + "'");
  }
  check_keys(j, {"initial_lr", "warm_epochs", "anneal_factor", "total_epochs"},
             where);
  LrSchedule s;
  s.initial_lr = require<double>(j, "initial_lr", where);
  s.warm_epochs = require<int>(j, "warm_epochs", where);
  s.anneal_factor = require<double>(j, "anneal_factor", where);
  s.total_epochs = require<int>(j, "total_epochs", where);
  validate(s, where.c_str());
  return s;
}

inline OptimizerChoice parse_optimizer(const json& j, const std::string& where) {
  check_keys(j, {"kind", "beta1", "beta2", "eps", "weight_decay"}, where);
  const auto kind = require<std::string>(j, "kind", where);
  OptimizerChoice c;
  if (kind == "plain-gd") {
    c.kind = OptimizerChoice::Kind::PlainGd;
  } else if (kind == "adamw") {
    c.kind = OptimizerChoice::Kind::AdamW;
    c.beta1 = get_or<double>(j, "beta1", 0.9, where);
    c.beta2 = get_or<double>(j, "beta2", 0.999, where);
    c.eps = get_or<double>(j, "eps", 1e-8, where);
    c.weight_decay = get_or<double>(j, "weight_decay", 0.01, where);
  } else {
    throw ValidationError(where + ": optimizer kind must be 'plain-gd' or 'adamw'");
  }
  return c;
}

inline MaskSpec parse_mask(const json& j, const std::string& where) {
  check_keys(j, {"start_prob", "span", "noise_mean", "noise_var"}, where);
  MaskSpec m;
  m.start_prob = get_or<double>(j, "start_prob", 0.02, where);
  m.span = get_or<int>(j, "span", 20, where);
  m.noise_mean = get_or<double>(j, "noise_mean", 0.0, where);
  m.noise_var = get_or<double>(j, "noise_var", 0.1, where);
  validate(m);
  return m;
}

}  // namespace cfg_detail

/// Dotted-path override, e.g. "ptec.K=3". The value parses as JSON when it
/// can, else as a string.
inline void apply_override(json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ValidationError("override must look like path.to.field=value: " +
                          assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  json* node = &root;
  std::size_t pos = 0;
  for (;;) {
    const auto dot = path.find('.', pos);
    const std::string key = path.substr(pos, dot - pos);
    if (key.empty())
      throw ValidationError("override has an empty path segment: " + assignment);
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    pos = dot + 1;
  }
}

inline ExperimentConfig parse_experiment_config(const json& merged) {
  using namespace cfg_detail;
  check_keys(merged,
             {"model", "seed", "output_dir", "data", "quadratic",
              "masked_model", "cssl", "ptec", "adaptation"},
             "config");
  ExperimentConfig cfg;
  const auto model = require<std::string>(merged, "model", "config");
  if (model == "quadratic") {
    cfg.model = ExperimentConfig::Model::Quadratic;
  } else if (model == "masked-prediction") {
    cfg.model = ExperimentConfig::Model::MaskedPrediction;
  } else {
    throw ValidationError("config: model must be 'quadratic' or 'masked-prediction'");
  }
  cfg.seed = require<std::uint64_t>(merged, "seed", "config");
  cfg.output_dir = require<std::string>(merged, "output_dir", "config");

  if (cfg.model == ExperimentConfig::Model::MaskedPrediction) {
    const json& d = merged.contains("data") ? merged.at("data") : json::object();
    check_keys(d,
               {"num_sources", "feature_dim", "frames_per_sample",
                "samples_per_source", "shifts", "heldout_fraction"},
               "config.data");
    cfg.data.num_sources = require<int>(d, "num_sources", "config.data");
    cfg.data.feature_dim = get_or<int>(d, "feature_dim", 8, "config.data");
    cfg.data.frames_per_sample =
        get_or<int>(d, "frames_per_sample", 30, "config.data");
    cfg.data.heldout_fraction =
        get_or<double>(d, "heldout_fraction", 0.2, "config.data");
    cfg.data.seed = cfg.seed;
    if (!d.contains("samples_per_source"))
      throw ValidationError("config.data: missing required field 'samples_per_source'");
    const json& sps = d.at("samples_per_source");
    if (sps.is_number_integer()) {
      cfg.data.samples_per_source.assign(
          static_cast<std::size_t>(cfg.data.num_sources), sps.get<int>());
    } else if (sps.is_array()) {
      cfg.data.samples_per_source = sps.get<std::vector<int>>();
    } else {
      throw ValidationError("config.data: samples_per_source must be int or array");
    }
    if (d.contains("shifts")) {
      for (const json& s : d.at("shifts")) {
        check_keys(s, {"mean", "stddev"}, "config.data.shifts[]");
        cfg.data.shifts.push_back(
            SourceShift{require<double>(s, "mean", "config.data.shifts[]"),
                        require<double>(s, "stddev", "config.data.shifts[]")});
      }
    } else {
      for (int i = 0; i < cfg.data.num_sources; ++i)
        cfg.data.shifts.push_back(SourceShift{static_cast<double>(i), 1.0});
    }
    validate(cfg.data);

    const json& m =
        merged.contains("masked_model") ? merged.at("masked_model") : json::object();
    check_keys(m, {"hidden_dim", "codebook_size", "code_dim", "mask"},
               "config.masked_model");
    cfg.masked_model.hidden_dim =
        get_or<int>(m, "hidden_dim", 16, "config.masked_model");
    cfg.masked_model.codebook_size =
        get_or<int>(m, "codebook_size", 256, "config.masked_model");
    cfg.masked_model.code_dim =
        get_or<int>(m, "code_dim", 16, "config.masked_model");
    cfg.masked_model.mask =
        m.contains("mask") ? parse_mask(m.at("mask"), "config.masked_model.mask")
                           : MaskSpec{};
  } else {
    if (!merged.contains("quadratic"))
      throw ValidationError("config: quadratic model requires a 'quadratic' section");
    const json& q = merged.at("quadratic");
    check_keys(q, {"sources", "samples_per_source"}, "config.quadratic");
    cfg.quadratic.samples_per_source =
        get_or<int>(q, "samples_per_source", 8, "config.quadratic");
    if (!q.contains("sources") || !q.at("sources").is_array() ||
        q.at("sources").empty())
      throw ValidationError("config.quadratic: 'sources' must be a nonempty array");
    for (const json& s : q.at("sources")) {
      check_keys(s, {"A", "c"}, "config.quadratic.sources[]");
      const json& ja = s.at("A");
      const json& jc = s.at("c");
      std::vector<double> diag;
      if (ja.is_number()) {
        diag = {ja.get<double>()};
      } else if (ja.is_array()) {
        diag = ja.get<std::vector<double>>();
      } else {
        throw ValidationError("config.quadratic: A must be a number or diagonal array");
      }
      std::vector<double> center;
      if (jc.is_number()) {
        center = {jc.get<double>()};
      } else {
        center = jc.get<std::vector<double>>();
      }
      if (diag.size() != center.size())
        throw ValidationError("config.quadratic: A and c dimension mismatch");
      const auto n = static_cast<Eigen::Index>(diag.size());
      Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
      Eigen::VectorXd c(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        A(i, i) = diag[static_cast<std::size_t>(i)];
        c(i) = center[static_cast<std::size_t>(i)];
      }
      cfg.quadratic.A.push_back(std::move(A));
      cfg.quadratic.c.push_back(std::move(c));
    }
  }

  if (!merged.contains("cssl"))
    throw ValidationError("config: missing required section 'cssl'");
  {
    const json& c = merged.at("cssl");
    check_keys(c, {"epochs", "batches_per_epoch", "optimizer", "schedule"},
               "config.cssl");
    cfg.cssl.epochs = require<int>(c, "epochs", "config.cssl");
    cfg.cssl.batches_per_epoch =
        require<int>(c, "batches_per_epoch", "config.cssl");
    if (!c.contains("schedule"))
      throw ValidationError("config.cssl: missing required field 'schedule'");
    cfg.cssl.schedule = parse_schedule(c.at("schedule"), "config.cssl.schedule");
    cfg.cssl.opt = c.contains("optimizer")
                       ? parse_optimizer(c.at("optimizer"), "config.cssl.optimizer")
                       : OptimizerChoice::plain_gd();
    cfg.cssl.seed = mix_seed(cfg.seed, 0xc551ULL);
    validate(cfg.cssl);
  }

  if (!merged.contains("ptec"))
    throw ValidationError("config: missing required section 'ptec'");
  {
    const json& p = merged.at("ptec");
    check_keys(p,
               {"T", "K", "alpha", "beta", "inner_optimizer", "outer_optimizer",
                "batches_per_epoch", "resample_inner_batch",
                "synchronous_schedules", "workers"},
               "config.ptec");
    // Paper-specified hyperparameters must be explicit.
    cfg.ptec.T = require<long>(p, "T", "config.ptec");
    cfg.ptec.K = require<int>(p, "K", "config.ptec");
    if (!p.contains("alpha") || !p.contains("beta"))
      throw ValidationError("config.ptec: alpha and beta schedules are required");
    cfg.ptec.alpha = parse_schedule(p.at("alpha"), "config.ptec.alpha");
    cfg.ptec.beta = parse_schedule(p.at("beta"), "config.ptec.beta");
    cfg.ptec.batches_per_epoch =
        require<int>(p, "batches_per_epoch", "config.ptec");
    cfg.ptec.inner_opt =
        p.contains("inner_optimizer")
            ? parse_optimizer(p.at("inner_optimizer"), "config.ptec.inner_optimizer")
            : OptimizerChoice::plain_gd();
    cfg.ptec.outer_opt =
        p.contains("outer_optimizer")
            ? parse_optimizer(p.at("outer_optimizer"), "config.ptec.outer_optimizer")
            : OptimizerChoice::plain_gd();
    cfg.ptec.resample_inner_batch =
        get_or<bool>(p, "resample_inner_batch", false, "config.ptec");
    cfg.ptec.synchronous_schedules =
        get_or<bool>(p, "synchronous_schedules", true, "config.ptec");
    cfg.ptec.workers = get_or<int>(p, "workers", 0, "config.ptec");
    cfg.ptec.seed = mix_seed(cfg.seed, 0x97ecULL);
    cfg.ptec.M = cfg.model == ExperimentConfig::Model::MaskedPrediction
                     ? cfg.data.num_sources
                     : static_cast<int>(cfg.quadratic.A.size());
    validate(cfg.ptec);
  }

  {
    const json& a =
        merged.contains("adaptation") ? merged.at("adaptation") : json::object();
    check_keys(a, {"steps", "lr"}, "config.adaptation");
    cfg.adaptation.steps = get_or<int>(a, "steps", 1, "config.adaptation");
    cfg.adaptation.lr = get_or<double>(a, "lr", 1e-4, "config.adaptation");
    if (cfg.adaptation.steps < 0 || cfg.adaptation.lr < 0.0)
      throw ValidationError("config.adaptation: steps and lr must be >= 0");
  }

  cfg.digest = hex_digest(fnv1a64(merged.dump()));
  return cfg;
}

inline ExperimentConfig load_experiment_config(
    const std::string& path, const std::vector<std::string>& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config: cannot open " + path);
  json merged;
  try {
    merged = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: JSON parse error: ") + e.what());
  }
  for (const std::string& o : overrides) apply_override(merged, o);
  return parse_experiment_config(merged);
}

/// Objectives + aligned data sources for the configured model kind.
/// Quadratic sources use placeholder single-frame samples; their loss is
/// batch-independent but the batch scheduler still needs data to slice.
inline std::pair<std::vector<std::shared_ptr<SourceObjective>>,
                 std::vector<DataSource>>
build_problem(const ExperimentConfig& cfg) {
  std::vector<std::shared_ptr<SourceObjective>> objectives;
  std::vector<DataSource> sources;
  if (cfg.model == ExperimentConfig::Model::MaskedPrediction) {
    sources = generate_synthetic_sources(cfg.data);
    for (int i = 0; i < cfg.data.num_sources; ++i)
      objectives.push_back(std::make_shared<MaskedPredictionModel>(
          cfg.data.feature_dim, cfg.masked_model.hidden_dim,
          cfg.masked_model.codebook_size, cfg.masked_model.code_dim,
          cfg.masked_model.mask, mix_seed(cfg.seed, 0x300de1ULL), i));
  } else {
    for (std::size_t i = 0; i < cfg.quadratic.A.size(); ++i) {
      objectives.push_back(std::make_shared<QuadraticSource>(
          cfg.quadratic.A[i], cfg.quadratic.c[i], static_cast<int>(i)));
      DataSource src;
      src.source_id = static_cast<int>(i);
      src.name = "quadratic-" + std::to_string(i);
      const int dim = static_cast<int>(cfg.quadratic.c[i].size());
      for (int n = 0; n < cfg.quadratic.samples_per_source; ++n)
        src.samples.emplace_back(1, dim);
      src.heldout.emplace_back(1, dim);
      src.size_weight = static_cast<double>(src.samples.size());
      sources.push_back(std::move(src));
    }
  }
  return {std::move(objectives), std::move(sources)};
}

}  // namespace ptec
