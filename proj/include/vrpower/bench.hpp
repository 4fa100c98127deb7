#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "vrpower/data.hpp"
#include "vrpower/solvers.hpp"
#include "vrpower/trace.hpp"

namespace vrpower {

inline const std::vector<double> kDefaultEtaGrid = {0.005, 0.01, 0.05, 0.1, 0.25, 0.5, 1.0};

// One solver entry of a plan. `config.epochs` doubles as the iteration count
// for the one-loop solvers. batch_frac and epoch_len 0 ("auto", m = n/|S|)
// are resolved against the dataset when the plan runs; oracle momentum takes
// beta from the spectral reference at the solver's effective step size.
struct SolverSpec {
  std::string id;  // power | power-m | vr-pca | vr-power-m | vr-hb-power
  SolverConfig config;
  bool oracle_momentum = false;
  double batch_frac = -1.0;  // < 0 means config.batch_size is already set
};

struct ExperimentPlan {
  DatasetSpec dataset;
  std::vector<SolverSpec> solvers;
  std::vector<std::uint64_t> seeds;
  double budget_passes = 0.0;  // > 0 caps every run's data passes
};

// Uniformly random direction; the usual start vector for a run.
inline Vec random_unit(std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  Vec w(static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = rng.normal();
  return normalize(w);
}

namespace detail {

struct ResolvedSolver {
  SolverConfig config;
  std::size_t iters = 0;  // one-loop solvers
};

inline ResolvedSolver resolve_solver(const SolverSpec& spec, const DataMatrix& data,
                                     const SpectralReference& ref, double budget) {
  ResolvedSolver r;
  r.config = spec.config;
  if (spec.batch_frac >= 0.0) {
    if (spec.batch_frac > 1.0) throw argument_error("batch fraction must be in (0, 1]");
    r.config.batch_size = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(spec.batch_frac * static_cast<double>(data.n))));
    r.config.batch_size = std::min(r.config.batch_size, data.n);
  }
  const std::size_t batch = r.config.batch_size == 0 ? data.n : r.config.batch_size;
  if (r.config.epoch_len == 0)
    r.config.epoch_len = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(static_cast<double>(data.n) / static_cast<double>(batch))));
  if (spec.oracle_momentum) {
    const double eta_eff = (spec.id == "power-m" || spec.id == "vr-power-m") ? 1.0 : r.config.eta;
    r.config.momentum = Momentum::fixed;
    r.config.beta = momentum_from_lambda2(eta_eff, ref.lambda2());
  }
  r.iters = r.config.epochs;
  if (budget > 0.0) {
    r.iters = std::min<std::size_t>(r.iters, static_cast<std::size_t>(std::floor(budget)));
    const double frac = static_cast<double>(batch) / static_cast<double>(data.n);
    const double per_epoch = (spec.id == "vr-pca")
                                 ? 1.0 + static_cast<double>(r.config.epoch_len) * frac
                                 : 1.0 + static_cast<double>(r.config.epoch_len - 1) * frac;
    r.config.epochs = std::min<std::size_t>(
        r.config.epochs, static_cast<std::size_t>(std::floor(budget / per_epoch)));
  }
  return r;
}

}  // namespace detail

// Runs every solver on every seed against one shared dataset and reference.
// Traces come back grouped by solver, seeds in plan order. Diverged runs are
// kept (truncated, flagged); they never abort the sweep.
inline std::vector<RunTrace> run_experiment(const ExperimentPlan& plan) {
  if (plan.solvers.empty()) throw argument_error("plan has no solvers");
  if (plan.seeds.empty()) throw argument_error("plan has no seeds");
  auto [data, ref] = load_dataset(plan.dataset);
  std::vector<RunTrace> traces;
  traces.reserve(plan.solvers.size() * plan.seeds.size());
  for (const auto& spec : plan.solvers) {
    const auto rs = detail::resolve_solver(spec, data, ref, plan.budget_passes);
    for (const std::uint64_t seed : plan.seeds) {
      Rng master(seed);
      const std::uint64_t w0_seed = master.next_u64();
      const std::uint64_t batch_seed = master.next_u64();
      const Vec w0 = random_unit(data.d, w0_seed);
      SolverConfig cfg = rs.config;
      cfg.seed = batch_seed;
      RunTrace trace;
      if (spec.id == "power") {
        trace = power_run(data, w0, rs.iters, &ref);
      } else if (spec.id == "power-m") {
        trace = power_momentum_run(data, w0, cfg.beta, rs.iters, &ref);
      } else if (spec.id == "vr-pca") {
        trace = vr_pca_run(data, w0, cfg, &ref);
      } else if (spec.id == "vr-power-m") {
        trace = vr_power_momentum_run(data, w0, cfg, &ref);
      } else if (spec.id == "vr-hb-power") {
        trace = vr_hb_power_run(data, w0, cfg, &ref);
      } else {
        throw argument_error("unknown solver '" + spec.id + "'");
      }
      trace.solver = spec.id;
      trace.seed = seed;
      traces.push_back(std::move(trace));
    }
  }
  return traces;
}

struct EpochAgg {
  std::size_t epoch = 0;
  double mean_gap = 0.0;
  double sd_gap = 0.0;       // sample standard deviation across seeds
  double mean_passes = 0.0;
  std::size_t count = 0;     // runs contributing at this epoch
};

// Mean and spread of the error gap per epoch across one solver's seeds.
// Truncated (diverged) runs simply stop contributing after their last row.
inline std::vector<EpochAgg> aggregate_gaps(const std::vector<RunTrace>& traces, const std::string& solver) {
  std::size_t max_rows = 0;
  for (const auto& tr : traces)
    if (tr.solver == solver) max_rows = std::max(max_rows, tr.rows.size());
  std::vector<EpochAgg> out;
  for (std::size_t i = 0; i < max_rows; ++i) {
    EpochAgg agg;
    double sum = 0.0, sum_sq = 0.0, sum_passes = 0.0;
    for (const auto& tr : traces) {
      if (tr.solver != solver || i >= tr.rows.size() || !tr.rows[i].error_gap) continue;
      const double g = *tr.rows[i].error_gap;
      sum += g;
      sum_sq += g * g;
      sum_passes += tr.rows[i].data_passes;
      agg.epoch = tr.rows[i].epoch;
      ++agg.count;
    }
    if (agg.count == 0) continue;
    const double n = static_cast<double>(agg.count);
    agg.mean_gap = sum / n;
    agg.mean_passes = sum_passes / n;
    agg.sd_gap = agg.count > 1 ? std::sqrt(std::max(0.0, (sum_sq - n * agg.mean_gap * agg.mean_gap) / (n - 1.0))) : 0.0;
    out.push_back(agg);
  }
  return out;
}

// Mean final error gap across one solver's seeds; +inf as soon as any seed
// diverged or lost its metric, so broken settings can never win a sweep.
inline double mean_final_gap(const std::vector<RunTrace>& traces, const std::string& solver) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& tr : traces) {
    if (tr.solver != solver) continue;
    if (tr.diverged || tr.rows.empty() || !tr.rows.back().error_gap)
      return std::numeric_limits<double>::infinity();
    sum += *tr.rows.back().error_gap;
    ++count;
  }
  return count == 0 ? std::numeric_limits<double>::infinity() : sum / static_cast<double>(count);
}

// Data passes consumed before the gap first reaches `target`; `miss` when the
// trace never gets there.
inline double passes_until_gap(const RunTrace& trace, double target, double miss) {
  for (const auto& row : trace.rows)
    if (row.error_gap && *row.error_gap <= target) return row.data_passes;
  return miss;
}

struct GridResult {
  double best_eta = 0.0;
  std::vector<std::pair<double, double>> table;  // (eta, score)
};

// Step-size selection over the plan's seeds. The default score is the mean
// final gap; with target_gap > 0 it is the mean data passes until the gap
// first reaches the target (a budget caps the charge for misses), which keeps
// candidates distinguishable after every final gap has saturated at zero.
// The grid must arrive strictly increasing; ties on score resolve toward the
// smaller step size, and diverged candidates score +inf.
inline GridResult grid_search_eta(const ExperimentPlan& plan, const std::vector<double>& grid,
                                  double target_gap = 0.0) {
  if (plan.solvers.size() != 1) throw argument_error("grid search tunes exactly one solver");
  const std::string& id = plan.solvers[0].id;
  if (id != "vr-hb-power" && id != "vr-pca")
    throw argument_error("grid search applies to step-size solvers, not '" + id + "'");
  if (grid.empty()) throw argument_error("grid is empty");
  for (std::size_t i = 0; i + 1 < grid.size(); ++i)
    if (!(grid[i] < grid[i + 1])) throw argument_error("grid must be strictly increasing");
  for (const double eta : grid)
    if (!(eta > 0.0 && eta <= 1.0)) throw argument_error("grid step sizes must be in (0, 1]");
  GridResult result;
  double best = std::numeric_limits<double>::infinity();
  for (const double eta : grid) {
    ExperimentPlan p = plan;
    p.solvers[0].config.eta = eta;
    const auto traces = run_experiment(p);
    double score;
    if (target_gap > 0.0) {
      const double miss = plan.budget_passes > 0.0 ? plan.budget_passes
                                                   : std::numeric_limits<double>::infinity();
      score = 0.0;
      for (const auto& tr : traces)
        score = tr.diverged ? std::numeric_limits<double>::infinity()
                            : score + passes_until_gap(tr, target_gap, miss);
      score /= static_cast<double>(traces.size());
    } else {
      score = mean_final_gap(traces, id);
    }
    result.table.emplace_back(eta, score);
    if (score < best) {
      best = score;
      result.best_eta = eta;
    }
  }
  if (!std::isfinite(best)) throw numeric_error("no viable step size: every grid point diverged");
  return result;
}

}  // namespace vrpower
