#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>

#include "vrpower/data.hpp"
#include "vrpower/matrix.hpp"
#include "vrpower/rates.hpp"
#include "vrpower/trace.hpp"

namespace vrpower {

enum class Momentum { none, fixed, adaptive };

struct SolverConfig {
  double eta = 1.0;
  Momentum momentum = Momentum::none;
  double beta = 0.0;            // momentum weight when fixed
  std::size_t batch_size = 0;   // 0 means full batch
  std::size_t epoch_len = 20;   // m: updates per epoch, outer step included
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  std::size_t estimator_warmup = 2;  // epochs before adaptive estimates are used
  bool rescale = true;               // joint rescaling of (w_t, w_{t+1}) each step
  bool with_replacement = false;     // batch sampling scheme
};

// Inner-loop state. w_cur/w_prev are the rescaled pair; log_scale accumulates
// the logs of the rescale divisors, so exp(log_scale) * w_cur reproduces the
// raw linear recursion (the recursion commutes with scaling).
struct IterateState {
  Vec w_prev;
  Vec w_cur;
  Vec outer;       // epoch anchor w~_s
  Vec outer_grad;  // g~ = C w~_s
  std::size_t inner_t = 0;
  double log_scale = 0.0;
};

// Observer of every iterate: (epoch index, inner step, rescaled iterate,
// cumulative log scale). Used by diagnostics and tests; never by solvers.
using IterateObserver = std::function<void(std::size_t, std::size_t, const Vec&, double)>;

// Variance-reduced gradient at w_cur, anchored at the epoch's exact outer
// gradient: splits w_cur into its component along the anchor (covered by
// outer_grad) and the rest (covered by a fresh mini-batch product).
inline Vec vr_gradient(const IterateState& state, const DataMatrix& data, const MiniBatch& batch) {
  const double anchor_sq = state.outer.squaredNorm();
  if (anchor_sq == 0.0) throw argument_error("outer anchor must be nonzero");
  const double along = state.outer.dot(state.w_cur) / anchor_sq;
  Vec g = minibatch_matvec(data, batch, project_orthogonal(state.outer, state.w_cur));
  g += along * state.outer_grad;
  return g;
}

// lambda2 estimate from two consecutive outer iterates and their stored exact
// gradients; the trailing iterate is deflated against the current one and run
// through the Rayleigh quotient. Returns nothing when the iterates are too
// aligned to carry second-direction information.
inline std::optional<double> estimate_lambda2(double theta, const Vec& prev_outer,
                                              const Vec& prev_grad, const Vec& outer,
                                              const Vec& outer_grad) {
  const double denom = 1.0 - theta * theta;
  if (denom < 1e-10) return std::nullopt;
  const double num = prev_outer.dot(prev_grad) - 2.0 * theta * outer.dot(prev_grad) +
                     theta * theta * outer.dot(outer_grad);
  return num / denom;
}

struct Lambda2Estimator {
  Vec prev_outer;
  Vec prev_grad;
  double theta = 0.0;
  double lambda2_hat = 0.0;
  bool has_prev = false;
  bool has_estimate = false;

  // Called once per epoch after the exact gradient is computed. Estimates are
  // ignored during warmup and when they land outside (0, rayleigh(outer)).
  void refresh(std::size_t epoch_index, std::size_t warmup, const Vec& outer, const Vec& outer_grad) {
    if (has_prev && epoch_index >= warmup) {
      theta = prev_outer.dot(outer);
      const auto est = estimate_lambda2(theta, prev_outer, prev_grad, outer, outer_grad);
      if (est) {
        const double rq = outer.dot(outer_grad) / outer.squaredNorm();
        if (*est > 0.0 && *est < rq) {
          lambda2_hat = *est;
          has_estimate = true;
        }
      }
    }
    prev_outer = outer;
    prev_grad = outer_grad;
    has_prev = true;
  }
};

// (1 - eta + eta * lambda2_hat)^2; collapses to (1 - eta)^2 with no estimate.
inline double momentum_from_lambda2(double eta, double lambda2_hat) {
  if (!(eta > 0.0 && eta <= 1.0)) throw argument_error("eta must be in (0, 1]");
  if (!(lambda2_hat >= 0.0)) throw argument_error("lambda2_hat must be >= 0");
  return momentum_factor(eta, lambda2_hat);
}

// Divide both members of the pair by ||w_cur||; directions and all later
// normalized iterates are unchanged.
inline void stability_rescale(IterateState& state) {
  const double nrm = state.w_cur.norm();
  if (!std::isfinite(nrm)) throw numeric_error("non-finite iterate norm");
  if (nrm < kNormFloor) throw numeric_error("iterate norm underflow");
  state.w_prev /= nrm;
  state.w_cur /= nrm;
  state.log_scale += std::log(nrm);
}

namespace detail {

inline void require_unit(const Vec& w, const char* what) {
  if (std::abs(w.norm() - 1.0) > 1e-9) throw argument_error(std::string(what) + " must be a unit vector");
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Trust region for iterate norms between rescalings.
inline bool iterate_sane(const Vec& w) {
  const double nrm = w.norm();
  return std::isfinite(nrm) && nrm >= 1e-8 && nrm <= 1e8;
}

inline std::optional<double> gap_or_none(const Vec& w, const SpectralReference* ref) {
  if (ref == nullptr) return std::nullopt;
  return error_gap(normalize(w), ref->u1);
}

inline std::optional<double> contraction_of(const std::optional<double>& prev,
                                            const std::optional<double>& cur) {
  if (!prev || !cur || !(*prev > 0.0)) return std::nullopt;
  return *cur / *prev;
}

inline void notify(const IterateObserver& obs, std::size_t epoch, std::size_t t, const Vec& w,
                   double log_scale) {
  if (obs) obs(epoch, t, w, log_scale);
}

}  // namespace detail

// Plain power iteration w <- normalize(C w); one data pass per iteration.
inline RunTrace power_run(const DataMatrix& data, const Vec& w0, std::size_t iters,
                          const SpectralReference* ref = nullptr, const IterateObserver& obs = {}) {
  if (static_cast<std::size_t>(w0.size()) != data.d) throw argument_error("w0 length must equal d");
  detail::require_unit(w0, "w0");
  detail::Stopwatch clock;
  RunTrace trace;
  trace.solver = "power";
  Vec w = w0;
  trace.rows.push_back({0, 0.0, detail::gap_or_none(w, ref), std::nullopt, std::nullopt, clock.seconds()});
  for (std::size_t t = 1; t <= iters; ++t) {
    w = normalize(covariance_matvec(data, w));
    const auto gap = detail::gap_or_none(w, ref);
    trace.rows.push_back({t, static_cast<double>(t), gap, std::nullopt,
                          detail::contraction_of(trace.rows.back().error_gap, gap), clock.seconds()});
    detail::notify(obs, 0, t, w, 0.0);
  }
  return trace;
}

// Heavy-ball power iteration: w_1 = C w_0, then w_{t+1} = 2 C w_t - beta
// w_{t-1}, with the pair rescaled by ||w_{t+1}|| after each update.
inline RunTrace power_momentum_run(const DataMatrix& data, const Vec& w0, double beta,
                                   std::size_t iters, const SpectralReference* ref = nullptr,
                                   const IterateObserver& obs = {}, bool rescale = true) {
  if (static_cast<std::size_t>(w0.size()) != data.d) throw argument_error("w0 length must equal d");
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw argument_error("beta must be finite and >= 0");
  detail::require_unit(w0, "w0");
  detail::Stopwatch clock;
  RunTrace trace;
  trace.solver = "power-m";
  IterateState st;
  st.w_prev = w0;
  st.w_cur = w0;
  trace.rows.push_back({0, 0.0, detail::gap_or_none(st.w_cur, ref), std::nullopt, std::nullopt, clock.seconds()});
  for (std::size_t t = 1; t <= iters; ++t) {
    Vec next = covariance_matvec(data, st.w_cur);
    if (t > 1) next = 2.0 * next - beta * st.w_prev;
    st.w_prev = std::move(st.w_cur);
    st.w_cur = std::move(next);
    st.inner_t = t;
    if (!detail::iterate_sane(st.w_cur)) {
      trace.diverged = true;
      trace.diverged_epoch = 0;
      trace.diverged_step = t;
      return trace;
    }
    if (rescale) stability_rescale(st);
    const auto gap = detail::gap_or_none(st.w_cur, ref);
    trace.rows.push_back({t, static_cast<double>(t), gap, std::nullopt,
                          detail::contraction_of(trace.rows.back().error_gap, gap), clock.seconds()});
    detail::notify(obs, 0, t, st.w_cur, st.log_scale);
  }
  return trace;
}

// Two-loop variance-reduced heavy-ball power iteration. Each epoch anchors at
// w~_s, pays one full pass for g~ = C w~_s, takes the momentum-free step
// w_1 = (1 - eta) w_0 + eta g~, then runs m - 1 mini-batch heavy-ball steps
//   w_{t+1} = 2 ((1 - eta) w_t + eta g_t) - beta_s w_{t-1}
// on variance-reduced gradients g_t. The epoch ends with w~_{s+1} = w_m.
inline RunTrace vr_hb_power_run(const DataMatrix& data, const Vec& w0, const SolverConfig& cfg,
                                const SpectralReference* ref = nullptr, const IterateObserver& obs = {}) {
  if (static_cast<std::size_t>(w0.size()) != data.d) throw argument_error("w0 length must equal d");
  detail::require_unit(w0, "w0");
  if (!(cfg.eta > 0.0 && cfg.eta <= 1.0)) throw argument_error("eta must be in (0, 1]");
  if (cfg.epoch_len < 1) throw argument_error("epoch_len must be >= 1");
  if (cfg.momentum == Momentum::fixed && (!(cfg.beta >= 0.0) || !std::isfinite(cfg.beta)))
    throw argument_error("beta must be finite and >= 0");
  const std::size_t batch = cfg.batch_size == 0 ? data.n : cfg.batch_size;
  if (batch < 1 || batch > data.n) throw argument_error("batch size must be in [1, n]");

  detail::Stopwatch clock;
  RunTrace trace;
  trace.solver = "vr-hb-power";
  trace.seed = cfg.seed;
  Rng rng(cfg.seed);
  Lambda2Estimator est;
  const double eta = cfg.eta;
  Vec outer = w0;
  double passes = 0.0;
  trace.rows.push_back({0, passes, detail::gap_or_none(outer, ref), std::nullopt, std::nullopt, clock.seconds()});

  for (std::size_t s = 0; s < cfg.epochs; ++s) {
    IterateState st;
    st.outer = outer;
    st.outer_grad = covariance_matvec(data, outer);
    passes += 1.0;
    if (cfg.momentum == Momentum::adaptive) est.refresh(s, cfg.estimator_warmup, st.outer, st.outer_grad);
    double beta_s = 0.0;
    if (cfg.momentum == Momentum::fixed) beta_s = cfg.beta;
    if (cfg.momentum == Momentum::adaptive) beta_s = momentum_from_lambda2(eta, est.lambda2_hat);

    st.w_prev = outer;
    st.w_cur = (1.0 - eta) * outer + eta * st.outer_grad;
    st.inner_t = 1;
    bool bad = !detail::iterate_sane(st.w_cur);
    if (!bad) {
      if (cfg.rescale) stability_rescale(st);
      detail::notify(obs, s, 1, st.w_cur, st.log_scale);
      for (std::size_t t = 1; t < cfg.epoch_len; ++t) {
        const MiniBatch b = cfg.with_replacement ? sample_minibatch_with_replacement(data.n, batch, rng)
                                                 : sample_minibatch(data.n, batch, rng);
        const Vec g = vr_gradient(st, data, b);
        passes += static_cast<double>(batch) / static_cast<double>(data.n);
        Vec next = 2.0 * ((1.0 - eta) * st.w_cur + eta * g) - beta_s * st.w_prev;
        st.w_prev = std::move(st.w_cur);
        st.w_cur = std::move(next);
        st.inner_t = t + 1;
        if (!detail::iterate_sane(st.w_cur)) {
          bad = true;
          break;
        }
        if (cfg.rescale) stability_rescale(st);
        detail::notify(obs, s, t + 1, st.w_cur, st.log_scale);
      }
    }
    if (bad) {
      trace.diverged = true;
      trace.diverged_epoch = s + 1;  // matches the 1-based epoch column
      trace.diverged_step = st.inner_t;
      return trace;
    }
    outer = st.w_cur;
    const auto gap = detail::gap_or_none(outer, ref);
    const auto l2 = (cfg.momentum == Momentum::adaptive && est.has_estimate)
                        ? std::optional<double>(est.lambda2_hat)
                        : std::nullopt;
    trace.rows.push_back({s + 1, passes, gap, l2,
                          detail::contraction_of(trace.rows.back().error_gap, gap), clock.seconds()});
  }
  return trace;
}

// The eta = 1 special case under its own name.
inline RunTrace vr_power_momentum_run(const DataMatrix& data, const Vec& w0, const SolverConfig& cfg,
                                      const SpectralReference* ref = nullptr,
                                      const IterateObserver& obs = {}) {
  SolverConfig forced = cfg;
  forced.eta = 1.0;
  RunTrace trace = vr_hb_power_run(data, w0, forced, ref, obs);
  trace.solver = "vr-power-m";
  return trace;
}

// Variance-reduced projection-free baseline: each epoch stores u~ = C w~ and
// every inner step moves along a corrected stochastic gradient, normalizing
// immediately:
//   w <- normalize(w + eta ((1/|S|) sum a_l a_l^T (w - w~) + u~)).
inline RunTrace vr_pca_run(const DataMatrix& data, const Vec& w0, const SolverConfig& cfg,
                           const SpectralReference* ref = nullptr, const IterateObserver& obs = {}) {
  if (static_cast<std::size_t>(w0.size()) != data.d) throw argument_error("w0 length must equal d");
  detail::require_unit(w0, "w0");
  if (!(cfg.eta > 0.0 && cfg.eta <= 1.0)) throw argument_error("eta must be in (0, 1]");
  if (cfg.epoch_len < 1) throw argument_error("epoch_len must be >= 1");
  const std::size_t batch = cfg.batch_size == 0 ? data.n : cfg.batch_size;
  if (batch < 1 || batch > data.n) throw argument_error("batch size must be in [1, n]");

  detail::Stopwatch clock;
  RunTrace trace;
  trace.solver = "vr-pca";
  trace.seed = cfg.seed;
  Rng rng(cfg.seed);
  Vec outer = w0;
  double passes = 0.0;
  trace.rows.push_back({0, passes, detail::gap_or_none(outer, ref), std::nullopt, std::nullopt, clock.seconds()});
  for (std::size_t s = 0; s < cfg.epochs; ++s) {
    const Vec anchor_grad = covariance_matvec(data, outer);
    passes += 1.0;
    Vec w = outer;
    for (std::size_t t = 0; t < cfg.epoch_len; ++t) {
      const MiniBatch b = cfg.with_replacement ? sample_minibatch_with_replacement(data.n, batch, rng)
                                               : sample_minibatch(data.n, batch, rng);
      Vec step = minibatch_matvec(data, b, w) - minibatch_matvec(data, b, outer) + anchor_grad;
      passes += static_cast<double>(batch) / static_cast<double>(data.n);
      w += cfg.eta * step;
      if (!detail::iterate_sane(w)) {
        trace.diverged = true;
        trace.diverged_epoch = s + 1;
        trace.diverged_step = t + 1;
        return trace;
      }
      w = normalize(w);
      detail::notify(obs, s, t + 1, w, 0.0);
    }
    outer = w;
    const auto gap = detail::gap_or_none(outer, ref);
    trace.rows.push_back({s + 1, passes, gap, std::nullopt,
                          detail::contraction_of(trace.rows.back().error_gap, gap), clock.seconds()});
  }
  return trace;
}

}  // namespace vrpower
