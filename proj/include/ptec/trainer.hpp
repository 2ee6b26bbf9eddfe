#pragma once

#include <algorithm>
#include <atomic>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <thread>
#include <vector>

#include "ptec/data.hpp"
#include "ptec/metrics.hpp"
#include "ptec/objective.hpp"
#include "ptec/optim.hpp"

namespace ptec {

struct PtecConfig {
  int M = 1;              // source count
  long T = 1;             // outer iterations
  int K = 1;              // local update steps
  LrSchedule alpha;       // local lr schedule
  LrSchedule beta;        // global lr schedule
  OptimizerChoice inner_opt = OptimizerChoice::plain_gd();
  OptimizerChoice outer_opt = OptimizerChoice::plain_gd();
  int batches_per_epoch = 1;
  bool resample_inner_batch = false;
  bool synchronous_schedules = true;
  int workers = 0;  // 0 means one per source
  std::uint64_t seed = 0;
};

inline void validate(const PtecConfig& c) {
  if (c.M < 1 || c.T < 1 || c.K < 1)
    throw ValidationError("PtecConfig: M, T, K must be >= 1");
  if (c.batches_per_epoch < 1)
    throw ValidationError("PtecConfig: batches_per_epoch must be >= 1");
  if (c.workers < 0) throw ValidationError("PtecConfig: workers must be >= 0");
  // alpha = 0 is legal: the local solves become no-ops and training reduces
  // to the averaged-loss baseline
  if (c.alpha.initial_lr < 0.0)
    throw ValidationError("PtecConfig.alpha: initial_lr must be >= 0");
  LrSchedule alpha_check = c.alpha;
  if (alpha_check.initial_lr == 0.0) alpha_check.initial_lr = 1.0;
  validate(alpha_check, "PtecConfig.alpha");
  validate(c.beta, "PtecConfig.beta");
  if (c.synchronous_schedules &&
      (c.alpha.warm_epochs != c.beta.warm_epochs ||
       c.alpha.anneal_factor != c.beta.anneal_factor ||
       c.alpha.total_epochs != c.beta.total_epochs))
    throw ValidationError(
        "PtecConfig: synchronous schedules must share warm/anneal/total epochs");
}

struct CsslConfig {
  LrSchedule schedule;
  OptimizerChoice opt = OptimizerChoice::plain_gd();
  int epochs = 1;
  int batches_per_epoch = 1;
  std::uint64_t seed = 0;
};

inline void validate(const CsslConfig& c) {
  if (c.epochs < 1) throw ValidationError("CsslConfig: epochs must be >= 1");
  if (c.batches_per_epoch < 1)
    throw ValidationError("CsslConfig: batches_per_epoch must be >= 1");
  validate(c.schedule, "CsslConfig.schedule");
}

struct TrainState {
  ParamVector theta;
  long iteration = 0;
  int epoch = 1;
  Optimizer outer;
  long degenerate_batches = 0;
  std::vector<MetricsRecord> metrics;
};

/// Per-epoch batch layout. After skipping, every source contributes exactly
/// `common_batches` batches.
struct EpochPlan {
  struct SourcePlan {
    int source_id = 0;
    int batch_size = 0;
    bool short_batch = false;
    int available = 0;  // batch count before skipping
    std::vector<std::vector<int>> batches;  // sample indices, post-skip
  };
  std::vector<SourcePlan> per_source;  // ascending source_id
  int common_batches = 0;
};

/// Batch size proportional to size_weight; surplus batches dropped uniformly
/// at random without replacement so every source contributes the same count.
inline EpochPlan schedule_batches(const std::vector<DataSource>& sources,
                                  int batches_per_epoch, std::mt19937_64& rng) {
  if (batches_per_epoch < 1)
    throw ContractViolation("schedule_batches: batches_per_epoch must be >= 1");
  if (sources.empty())
    throw ContractViolation("schedule_batches: no sources");
  EpochPlan plan;
  for (const DataSource& src : sources) {
    if (src.samples.empty())
      throw ContractViolation("schedule_batches: source " +
                              std::to_string(src.source_id) + " is empty");
    EpochPlan::SourcePlan sp;
    sp.source_id = src.source_id;
    sp.batch_size = std::max(
        1, static_cast<int>(std::llround(src.size_weight / batches_per_epoch)));
    const int n = static_cast<int>(src.samples.size());
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    int count = n / sp.batch_size;
    if (count == 0) {
      // too small for one full batch: single short batch, flagged
      sp.short_batch = true;
      sp.batches.push_back(order);
      count = 1;
    } else {
      for (int b = 0; b < count; ++b)
        sp.batches.emplace_back(
            order.begin() + static_cast<std::ptrdiff_t>(b) * sp.batch_size,
            order.begin() + static_cast<std::ptrdiff_t>(b + 1) * sp.batch_size);
    }
    sp.available = count;
    plan.per_source.push_back(std::move(sp));
  }
  std::sort(plan.per_source.begin(), plan.per_source.end(),
            [](const auto& a, const auto& b) { return a.source_id < b.source_id; });
  int common = batches_per_epoch;
  for (const auto& sp : plan.per_source) common = std::min(common, sp.available);
  for (auto& sp : plan.per_source) {
    if (sp.available > common) {
      std::vector<int> keep;
      std::vector<int> all(static_cast<std::size_t>(sp.available));
      std::iota(all.begin(), all.end(), 0);
      std::sample(all.begin(), all.end(), std::back_inserter(keep),
                  static_cast<std::size_t>(common), rng);
      std::vector<std::vector<int>> kept;
      kept.reserve(keep.size());
      for (int b : keep) kept.push_back(std::move(sp.batches[static_cast<std::size_t>(b)]));
      sp.batches = std::move(kept);
    }
  }
  plan.common_batches = common;
  return plan;
}

/// (1/M) sum of per-source gradients, accumulated in ascending source order.
/// The pinned order makes outer updates bit-reproducible.
inline GradVector average_gradients(const std::vector<GradVector>& grads) {
  if (grads.empty()) throw ContractViolation("average_gradients: empty");
  GradVector acc(grads.front().dim(), 0.0);
  for (const GradVector& g : grads) add_inplace(acc, g);
  scale_inplace(acc, 1.0 / static_cast<double>(grads.size()));
  return acc;
}

/// One CSSL update: averaged gradient at the shared parameters.
inline void cssl_step(TrainState& state,
                      const std::vector<std::shared_ptr<SourceObjective>>& objectives,
                      const std::vector<Batch>& batches, double lr) {
  if (objectives.size() != batches.size())
    throw ContractViolation("cssl_step: one batch per objective required");
  std::vector<GradVector> grads;
  MetricsRecord rec;
  grads.reserve(objectives.size());
  for (std::size_t i = 0; i < objectives.size(); ++i) {
    auto ev = objectives[i]->evaluate(state.theta, batches[i]);
    if (!all_finite(ev.grad.values))
      throw NumericalError("cssl_step: non-finite gradient from source " +
                           std::to_string(objectives[i]->source_id()));
    if (ev.degenerate) ++state.degenerate_batches;
    rec.local_losses.emplace_back(objectives[i]->source_id(), ev.loss);
    rec.global_loss += ev.loss;
    grads.push_back(std::move(ev.grad));
  }
  rec.global_loss /= static_cast<double>(objectives.size());
  const GradVector avg = average_gradients(grads);
  state.theta = state.outer.step(state.theta, avg, lr);
  require_finite(state.theta, "cssl_step: theta");
  state.iteration += 1;
  rec.iter = state.iteration;
  rec.epoch = state.epoch;
  rec.grad_norm = norm2(avg);
  rec.lr_alpha = 0.0;
  rec.lr_beta = lr;
  rec.degenerate_batches = state.degenerate_batches;
  state.metrics.push_back(std::move(rec));
}

struct LowerResult {
  ParamVector phi;      // phi_K
  GradVector grad;      // grad g(phi_K) on the scheduled batch
  double loss = 0.0;    // g(phi_K) on the scheduled batch
  long degenerate = 0;
};

/// K-step lower-level solve from a private copy of theta, then one extra
/// gradient evaluation at phi_K on the scheduled batch (the quantity the
/// outer update consumes). `inner_batch(k)`, when given, supplies a fresh
/// batch per inner step k in [0, K).
inline LowerResult solve_lower(
    const SourceObjective& obj, const ParamVector& theta, int K, double alpha,
    const Batch& batch,
    const OptimizerChoice& inner_choice = OptimizerChoice::plain_gd(),
    const std::function<Batch(int)>& inner_batch = nullptr) {
  if (K < 1) throw ContractViolation("solve_lower: K must be >= 1");
  LowerResult out;
  out.phi = theta;  // copy; theta stays untouched
  Optimizer inner(inner_choice, theta.dim());
  for (int k = 0; k < K; ++k) {
    const Batch step_batch = inner_batch ? inner_batch(k) : batch;
    const auto ev = obj.evaluate(out.phi, step_batch);
    if (!all_finite(ev.grad.values))
      throw NumericalError("solve_lower: non-finite gradient at step " +
                           std::to_string(k + 1) + " (source " +
                           std::to_string(obj.source_id()) + ")");
    if (ev.degenerate) ++out.degenerate;
    out.phi = inner.step(out.phi, ev.grad, alpha);
    if (!all_finite(out.phi.values))
      throw NumericalError("solve_lower: non-finite iterate at step " +
                           std::to_string(k + 1) + " (source " +
                           std::to_string(obj.source_id()) + ")");
  }
  auto final_ev = obj.evaluate(out.phi, batch);
  if (!all_finite(final_ev.grad.values))
    throw NumericalError("solve_lower: non-finite final gradient (source " +
                         std::to_string(obj.source_id()) + ")");
  if (final_ev.degenerate) ++out.degenerate;
  out.grad = std::move(final_ev.grad);
  out.loss = final_ev.loss;
  return out;
}

struct PtecIterationOptions {
  OptimizerChoice inner_opt = OptimizerChoice::plain_gd();
  int workers = 0;  // 0 means one per source
  // When set, supplies fresh inner-step batches: provider(source_index, k).
  std::function<Batch(int, int)> inner_batch_provider;
};

/// One Algorithm-style outer iteration: M independent lower-level solves
/// (parallelizable), then a single outer update on the averaged gradients
/// aggregated in ascending source order.
inline void ptec_iteration(
    TrainState& state,
    const std::vector<std::shared_ptr<SourceObjective>>& objectives,
    const std::vector<Batch>& batches, double alpha, double beta, int K,
    const PtecIterationOptions& opts = {}) {
  const std::size_t M = objectives.size();
  if (M == 0) throw ContractViolation("ptec_iteration: no objectives");
  if (batches.size() != M)
    throw ContractViolation("ptec_iteration: one batch per source required");

  std::vector<LowerResult> results(M);
  std::vector<std::exception_ptr> errors(M);
  int workers = opts.workers > 0 ? opts.workers : static_cast<int>(M);
  workers = std::min<int>(workers, static_cast<int>(M));

  auto solve_one = [&](std::size_t i) {
    std::function<Batch(int)> inner;
    if (opts.inner_batch_provider) {
      const int src = static_cast<int>(i);
      inner = [&, src](int k) { return opts.inner_batch_provider(src, k); };
    }
    results[i] = solve_lower(*objectives[i], state.theta, K, alpha, batches[i],
                             opts.inner_opt, inner);
  };

  if (workers <= 1) {
    for (std::size_t i = 0; i < M; ++i) solve_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&]() {
        for (;;) {
          const std::size_t i = next.fetch_add(1);
          if (i >= M) return;
          try {
            solve_one(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    for (std::size_t i = 0; i < M; ++i)
      if (errors[i]) std::rethrow_exception(errors[i]);
  }

  MetricsRecord rec;
  std::vector<GradVector> grads;
  grads.reserve(M);
  for (std::size_t i = 0; i < M; ++i) {
    state.degenerate_batches += results[i].degenerate;
    rec.local_losses.emplace_back(objectives[i]->source_id(), results[i].loss);
    rec.global_loss += results[i].loss;
    grads.push_back(std::move(results[i].grad));
  }
  rec.global_loss /= static_cast<double>(M);
  const GradVector avg = average_gradients(grads);
  state.theta = state.outer.step(state.theta, avg, beta);
  require_finite(state.theta, "ptec_iteration: theta");
  state.iteration += 1;
  rec.iter = state.iteration;
  rec.epoch = state.epoch;
  rec.grad_norm = norm2(avg);
  rec.lr_alpha = alpha;
  rec.lr_beta = beta;
  rec.degenerate_batches = state.degenerate_batches;
  state.metrics.push_back(std::move(rec));
}

struct TrainResult {
  ParamVector theta;
  std::vector<MetricsRecord> metrics;
};

inline ParamVector random_init(std::size_t dim, std::uint64_t seed,
                               double scale = 0.05) {
  std::mt19937_64 rng(mix_seed(seed, 0x1417ULL));
  std::normal_distribution<double> dist(0.0, scale);
  ParamVector p(dim);
  for (double& x : p.values) x = dist(rng);
  return p;
}

namespace detail {

inline constexpr std::uint64_t kEpochPlanTag = 0xe90cULL;
inline constexpr std::uint64_t kInnerResampleTag = 0x4e5aULL;

inline void require_aligned(
    const std::vector<std::shared_ptr<SourceObjective>>& objectives,
    const std::vector<DataSource>& sources) {
  if (objectives.empty() || objectives.size() != sources.size())
    throw ContractViolation("trainer: objectives/sources misaligned");
  for (std::size_t i = 0; i < objectives.size(); ++i) {
    if (objectives[i]->source_id() != sources[i].source_id)
      throw ContractViolation("trainer: objective/source id mismatch at " +
                              std::to_string(i));
    if (i > 0 && sources[i].source_id <= sources[i - 1].source_id)
      throw ContractViolation("trainer: sources must be in ascending source_id order");
  }
}

inline std::vector<Batch> materialize(const std::vector<DataSource>& sources,
                                      const EpochPlan& plan, int j) {
  std::vector<Batch> batches;
  batches.reserve(sources.size());
  for (std::size_t i = 0; i < sources.size(); ++i)
    batches.push_back(
        make_batch(sources[i], plan.per_source[i].batches[static_cast<std::size_t>(j)]));
  return batches;
}

}  // namespace detail

/// Epochs of per-source batches; one averaged-gradient update per scheduled
/// batch slot. Deterministic given the seed.
inline TrainResult cssl_train(
    const CsslConfig& config,
    const std::vector<std::shared_ptr<SourceObjective>>& objectives,
    const std::vector<DataSource>& sources, const ParamVector& theta_init) {
  validate(config);
  detail::require_aligned(objectives, sources);
  TrainState state;
  state.theta = theta_init;
  state.outer = Optimizer(config.opt, theta_init.dim());
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    state.epoch = epoch;
    std::mt19937_64 rng(mix_seed(config.seed, detail::kEpochPlanTag,
                                 static_cast<std::uint64_t>(epoch)));
    const EpochPlan plan =
        schedule_batches(sources, config.batches_per_epoch, rng);
    const double lr =
        lr_at(config.schedule, std::min(epoch, config.schedule.total_epochs));
    for (int j = 0; j < plan.common_batches; ++j)
      cssl_step(state, objectives, detail::materialize(sources, plan, j), lr);
  }
  return TrainResult{std::move(state.theta), std::move(state.metrics)};
}

/// T outer iterations organized into epochs; one epoch consumes each
/// source's scheduled batch list once. Same epoch-plan seed derivation as
/// cssl_train, so matched seeds give matched batch streams.
inline TrainResult ptec_train(
    const PtecConfig& config,
    const std::vector<std::shared_ptr<SourceObjective>>& objectives,
    const std::vector<DataSource>& sources, const ParamVector& theta_init) {
  validate(config);
  detail::require_aligned(objectives, sources);
  if (static_cast<int>(objectives.size()) != config.M)
    throw ValidationError("ptec_train: config.M does not match source count");
  TrainState state;
  state.theta = theta_init;
  state.outer = Optimizer(config.outer_opt, theta_init.dim());
  long t = 0;
  for (int epoch = 1; t < config.T; ++epoch) {
    state.epoch = epoch;
    std::mt19937_64 rng(mix_seed(config.seed, detail::kEpochPlanTag,
                                 static_cast<std::uint64_t>(epoch)));
    const EpochPlan plan =
        schedule_batches(sources, config.batches_per_epoch, rng);
    const int sched_epoch = std::min(epoch, config.alpha.total_epochs);
    const double alpha = lr_at(config.alpha, sched_epoch);
    const double beta =
        lr_at(config.beta, std::min(epoch, config.beta.total_epochs));
    for (int j = 0; j < plan.common_batches && t < config.T; ++j, ++t) {
      PtecIterationOptions opts;
      opts.inner_opt = config.inner_opt;
      opts.workers = config.workers;
      if (config.resample_inner_batch) {
        const long iter = t;
        opts.inner_batch_provider = [&sources, &config, iter](int src, int k) {
          const DataSource& s = sources[static_cast<std::size_t>(src)];
          std::mt19937_64 brng(mix_seed(
              config.seed, detail::kInnerResampleTag,
              static_cast<std::uint64_t>(iter) * 1000003ULL +
                  static_cast<std::uint64_t>(src),
              static_cast<std::uint64_t>(k)));
          std::uniform_int_distribution<int> pick(
              0, static_cast<int>(s.samples.size()) - 1);
          std::vector<int> idx;
          const int bs = std::max(
              1, static_cast<int>(std::llround(s.size_weight /
                                               config.batches_per_epoch)));
          for (int n = 0; n < bs; ++n) idx.push_back(pick(brng));
          return make_batch(s, idx);
        };
      }
      ptec_iteration(state, objectives, detail::materialize(sources, plan, j),
                     alpha, beta, config.K, opts);
    }
  }
  return TrainResult{std::move(state.theta), std::move(state.metrics)};
}

struct RoundResult {
  std::string label;  // "CSSL.1", "PTEC.1", ...
  ParamVector theta;
  std::vector<MetricsRecord> metrics;
};

/// Alternating initialization: CSSL.1 from theta0, PTEC.i from CSSL.i,
/// CSSL.(i+1) from PTEC.i. `on_checkpoint` runs after each completed round
/// so earlier checkpoints survive a later failure.
inline std::vector<RoundResult> mutual_init_rounds(
    const CsslConfig& cssl_config, const PtecConfig& ptec_config,
    const std::vector<std::shared_ptr<SourceObjective>>& objectives,
    const std::vector<DataSource>& sources, int rounds,
    const ParamVector& theta0,
    const std::function<void(const RoundResult&)>& on_checkpoint = nullptr) {
  if (rounds < 1)
    throw ContractViolation("mutual_init_rounds: rounds must be >= 1");
  std::vector<RoundResult> out;
  ParamVector theta = theta0;
  for (int r = 1; r <= rounds; ++r) {
    CsslConfig cc = cssl_config;
    cc.seed = mix_seed(cssl_config.seed, 0xc551ULL, static_cast<std::uint64_t>(r));
    TrainResult cssl = cssl_train(cc, objectives, sources, theta);
    out.push_back(RoundResult{"CSSL." + std::to_string(r), cssl.theta,
                              std::move(cssl.metrics)});
    if (on_checkpoint) on_checkpoint(out.back());

    PtecConfig pc = ptec_config;
    pc.seed = mix_seed(ptec_config.seed, 0x97ecULL, static_cast<std::uint64_t>(r));
    TrainResult ptec = ptec_train(pc, objectives, sources, cssl.theta);
    out.push_back(RoundResult{"PTEC." + std::to_string(r), ptec.theta,
                              std::move(ptec.metrics)});
    if (on_checkpoint) on_checkpoint(out.back());
    theta = out.back().theta;
  }
  return out;
}

}  // namespace ptec
