// Experiment runner: data generation, both trainers, the iterative
// mutual-initialization protocol, adaptation evaluation, and gradient
// checking, all driven by one JSON config.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <random>

#include "ptec/config.hpp"
#include "ptec/dataset.hpp"
#include "ptec/eval.hpp"

namespace fs = std::filesystem;
using namespace ptec;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitNumerical = 2;

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_override;
};

ExperimentConfig load_config(const CommonArgs& args) {
  ExperimentConfig cfg =
      load_experiment_config(args.config_path, args.overrides);
  if (!args.out_override.empty()) cfg.output_dir = args.out_override;
  if (const char* env = std::getenv("PTEC_OUT_DIR"); env && *env)
    cfg.output_dir = env;
  return cfg;
}

fs::path ensure_out_dir(const ExperimentConfig& cfg) {
  fs::path out(cfg.output_dir);
  fs::create_directories(out);
  return out;
}

void write_digest(const fs::path& out, const ExperimentConfig& cfg) {
  std::ofstream f(out / "config_digest.txt", std::ios::trunc);
  f << cfg.digest << "\n";
}

Checkpoint make_ckpt(const ExperimentConfig& cfg, const ParamVector& theta,
                     int epoch, const std::string& round_label) {
  Checkpoint c;
  c.model_kind = cfg.model == ExperimentConfig::Model::Quadratic
                     ? "quadratic"
                     : "masked-prediction";
  c.epoch = epoch;
  c.round_label = round_label;
  c.seed = cfg.seed;
  c.config_digest = cfg.digest;
  c.params = theta;
  return c;
}

ParamVector initial_theta(const ExperimentConfig& cfg, std::size_t dim) {
  return random_init(dim, cfg.seed);
}

std::vector<Batch> heldout_batches(const DataSource& src, int batch_size) {
  std::vector<Batch> out;
  Batch b;
  b.source_id = src.source_id;
  for (const Sample& s : src.heldout) {
    b.samples.push_back(s);
    if (static_cast<int>(b.samples.size()) == batch_size) {
      out.push_back(std::move(b));
      b = Batch{src.source_id, {}};
    }
  }
  if (!b.samples.empty()) out.push_back(std::move(b));
  return out;
}

std::vector<Batch> train_batches(const DataSource& src, int batch_size,
                                 std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed, 0xada97ULL,
                               static_cast<std::uint64_t>(src.source_id)));
  std::vector<int> order(src.samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Batch> out;
  for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch_size)) {
    std::vector<int> idx(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(
                                             std::min(i + batch_size, order.size())));
    out.push_back(make_batch(src, idx));
  }
  return out;
}

int adaptation_batch_size(const ExperimentConfig& cfg, const DataSource& src) {
  const int bs = static_cast<int>(
      std::llround(src.size_weight / std::max(1, cfg.ptec.batches_per_epoch)));
  return std::max(1, bs);
}

std::vector<AdaptationReport> run_adaptation(
    const ExperimentConfig& cfg,
    const std::vector<std::shared_ptr<SourceObjective>>& objectives,
    const std::vector<DataSource>& sources, const ParamVector& theta,
    const std::string& label) {
  std::vector<AdaptationReport> reports;
  for (std::size_t i = 0; i < objectives.size(); ++i) {
    const int bs = adaptation_batch_size(cfg, sources[i]);
    reports.push_back(adapt_and_eval(
        theta, *objectives[i], cfg.adaptation.steps, cfg.adaptation.lr,
        train_batches(sources[i], bs, cfg.seed),
        heldout_batches(sources[i], bs), label));
  }
  return reports;
}

int cmd_gen_data(const ExperimentConfig& cfg) {
  if (cfg.model != ExperimentConfig::Model::MaskedPrediction) {
    std::cerr << "gen-data requires model=masked-prediction\n";
    return kExitValidation;
  }
  const fs::path out = ensure_out_dir(cfg);
  const auto sources = generate_synthetic_sources(cfg.data);
  save_dataset((out / "dataset.bin").string(), sources, cfg.data.feature_dim,
               cfg.data.frames_per_sample, cfg.seed);
  write_digest(out, cfg);
  std::cout << "wrote " << (out / "dataset.bin").string() << " with "
            << sources.size() << " sources\n";
  return kExitOk;
}

int cmd_pretrain_cssl(const ExperimentConfig& cfg, const std::string& init) {
  const fs::path out = ensure_out_dir(cfg);
  auto [objectives, sources] = build_problem(cfg);
  ParamVector theta0 = init.empty()
                           ? initial_theta(cfg, objectives.front()->dim())
                           : load_checkpoint(init).params;
  TrainResult res = cssl_train(cfg.cssl, objectives, sources, theta0);
  write_metrics((out / "cssl_metrics.csv").string(), res.metrics);
  save_checkpoint((out / "cssl.ckpt").string(),
                  make_ckpt(cfg, res.theta, cfg.cssl.epochs, "CSSL"));
  write_digest(out, cfg);
  std::cout << "cssl: " << res.metrics.size() << " iterations, final loss "
            << format_double(res.metrics.back().global_loss) << "\n";
  return kExitOk;
}

int cmd_pretrain_ptec(const ExperimentConfig& cfg, const std::string& init,
                      bool cold_start) {
  if (init.empty() && !cold_start) {
    std::cerr << "pretrain-ptec needs --init <cssl checkpoint>; the method is "
                 "meant to be initialized with a model trained from the "
                 "averaged-loss baseline. Pass --cold-start to proceed from "
                 "random parameters anyway.\n";
    return kExitValidation;
  }
  const fs::path out = ensure_out_dir(cfg);
  auto [objectives, sources] = build_problem(cfg);
  ParamVector theta0 = init.empty()
                           ? initial_theta(cfg, objectives.front()->dim())
                           : load_checkpoint(init).params;
  TrainResult res = ptec_train(cfg.ptec, objectives, sources, theta0);
  write_metrics((out / "ptec_metrics.csv").string(), res.metrics);
  save_checkpoint((out / "ptec.ckpt").string(),
                  make_ckpt(cfg, res.theta, res.metrics.back().epoch, "PTEC"));
  write_digest(out, cfg);
  std::cout << "ptec: " << res.metrics.size() << " iterations, final loss "
            << format_double(res.metrics.back().global_loss) << "\n";
  return kExitOk;
}

int cmd_iterate(const ExperimentConfig& cfg, int rounds) {
  const fs::path out = ensure_out_dir(cfg);
  auto [objectives, sources] = build_problem(cfg);
  ParamVector theta0 = initial_theta(cfg, objectives.front()->dim());
  auto on_checkpoint = [&](const RoundResult& r) {
    // "CSSL.2" -> cssl.2.ckpt
    std::string name = r.label;
    for (char& ch : name) ch = ch == '.' ? '.' : static_cast<char>(std::tolower(ch));
    save_checkpoint((out / (name + ".ckpt")).string(),
                    make_ckpt(cfg, r.theta, r.metrics.back().epoch, r.label));
    write_metrics((out / (name + "_metrics.csv")).string(), r.metrics);
    std::cout << r.label << ": final loss "
              << format_double(r.metrics.back().global_loss) << "\n";
  };
  mutual_init_rounds(cfg.cssl, cfg.ptec, objectives, sources, rounds, theta0,
                     on_checkpoint);
  write_digest(out, cfg);
  return kExitOk;
}

int cmd_adapt_eval(const ExperimentConfig& cfg, const std::string& ckpt_path) {
  const fs::path out = ensure_out_dir(cfg);
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  auto [objectives, sources] = build_problem(cfg);
  if (ckpt.params.dim() != objectives.front()->dim()) {
    std::cerr << "checkpoint dim " << ckpt.params.dim()
              << " does not match configured model dim "
              << objectives.front()->dim() << "\n";
    return kExitValidation;
  }
  const auto reports =
      run_adaptation(cfg, objectives, sources, ckpt.params, ckpt.round_label);
  std::ofstream csv(out / "adapt_report.csv", std::ios::trunc);
  csv << "source_id,steps,lr";
  for (int s = 0; s <= cfg.adaptation.steps; ++s) csv << ",loss_step_" << s;
  csv << "\n";
  for (const auto& r : reports) {
    csv << r.source_id << ',' << r.steps << ',' << format_double(r.lr);
    for (double l : r.trajectory) csv << ',' << format_double(l);
    csv << "\n";
    std::cout << "source " << r.source_id << ": "
              << format_double(r.trajectory.front()) << " -> "
              << format_double(r.trajectory.back()) << "\n";
  }
  std::cout << "mean post-adaptation loss: "
            << format_double(mean_post_adaptation_loss(reports)) << "\n";
  write_digest(out, cfg);
  return kExitOk;
}

int cmd_gradcheck(const ExperimentConfig& cfg) {
  auto [objectives, sources] = build_problem(cfg);
  const double tol =
      cfg.model == ExperimentConfig::Model::Quadratic ? 1e-7 : 1e-5;
  std::mt19937_64 rng(mix_seed(cfg.seed, 0x9cadcULL));
  std::normal_distribution<double> dist(0.0, 0.5);
  double worst = 0.0;
  for (int probe = 0; probe < 100; ++probe) {
    const std::size_t i = static_cast<std::size_t>(probe) % objectives.size();
    ParamVector p(objectives[i]->dim());
    for (double& x : p.values) x = dist(rng);
    std::uniform_int_distribution<int> pick(
        0, static_cast<int>(sources[i].samples.size()) - 1);
    Batch b = make_batch(sources[i], {pick(rng), pick(rng)});
    const CheckReport rep = grad_check(*objectives[i], p, b, 1e-5, tol);
    worst = std::max(worst, rep.max_rel_error);
    if (!rep.pass) {
      std::cerr << "gradcheck FAILED: source " << objectives[i]->source_id()
                << " max rel error " << format_double(rep.max_rel_error)
                << " at component " << rep.worst_index << "\n";
      return kExitNumerical;
    }
  }
  std::cout << "gradcheck passed: 100 probes, max rel error "
            << format_double(worst) << " (tol " << format_double(tol) << ")\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bilevel equilibrium-constrained pre-training experiments"};
  app.require_subcommand(1);

  CommonArgs common;
  int rounds = 1;
  std::string init_path;
  std::string ckpt_path;
  bool cold_start = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", common.config_path, "JSON config path")
        ->required();
    sub->add_option("--set", common.overrides,
                    "dotted-path override, e.g. ptec.K=3");
    sub->add_option("--out", common.out_override, "output directory override");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "persist synthetic sources");
  add_common(gen);
  CLI::App* cssl = app.add_subcommand("pretrain-cssl", "averaged-loss baseline");
  add_common(cssl);
  cssl->add_option("--init", init_path, "warm-start checkpoint");
  CLI::App* ptec = app.add_subcommand("pretrain-ptec", "bilevel training");
  add_common(ptec);
  ptec->add_option("--init", init_path, "initializing checkpoint");
  ptec->add_flag("--cold-start", cold_start,
                 "allow starting from random parameters");
  CLI::App* iterate =
      app.add_subcommand("iterate", "alternating mutual initialization");
  add_common(iterate);
  iterate->add_option("--rounds", rounds, "number of rounds")->required();
  CLI::App* adapt = app.add_subcommand("adapt-eval", "per-source adaptation");
  add_common(adapt);
  adapt->add_option("--ckpt", ckpt_path, "checkpoint to evaluate")->required();
  CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference audit");
  add_common(gc);

  CLI11_PARSE(app, argc, argv);

  try {
    const ExperimentConfig cfg = load_config(common);
    if (gen->parsed()) return cmd_gen_data(cfg);
    if (cssl->parsed()) return cmd_pretrain_cssl(cfg, init_path);
    if (ptec->parsed()) return cmd_pretrain_ptec(cfg, init_path, cold_start);
    if (iterate->parsed()) return cmd_iterate(cfg, rounds);
    if (adapt->parsed()) return cmd_adapt_eval(cfg, ckpt_path);
    if (gc->parsed()) return cmd_gradcheck(cfg);
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ContractViolation& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitOk;
}
