#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "fixtures.hpp"
#include "vrpower/data.hpp"
#include "vrpower/rates.hpp"
#include "vrpower/solvers.hpp"

using namespace vrpower;

namespace {

struct Snap {
  Vec w;
  double log_scale;
};

IterateObserver capture(std::vector<Snap>& out) {
  return [&out](std::size_t, std::size_t, const Vec& w, double log_scale) {
    out.push_back({w, log_scale});
  };
}

SolverConfig full_batch_cfg(double eta, double beta, std::size_t m, std::size_t epochs, std::size_t n) {
  SolverConfig cfg;
  cfg.eta = eta;
  cfg.momentum = Momentum::fixed;
  cfg.beta = beta;
  cfg.batch_size = n;
  cfg.epoch_len = m;
  cfg.epochs = epochs;
  return cfg;
}

}  // namespace

TEST_CASE("plain power iteration reproduces the hand-computed step") {
  const DataMatrix data = fixtures::two_point_dense();
  Vec w0(2);
  w0 << 1.0, 1.0;
  w0 /= std::sqrt(2.0);
  std::vector<Snap> snaps;
  const SpectralReference ref = reference_eigenpairs(data);
  power_run(data, w0, 1, &ref, capture(snaps));
  REQUIRE(snaps.size() == 1);
  // C w0 = (sqrt 2, 1/(2 sqrt 2)) normalizes to about (0.970143, 0.242536)
  CHECK(std::abs(snaps[0].w[0] - 0.97014250014533188) <= 1e-12);
  CHECK(std::abs(snaps[0].w[1] - 0.24253562503633297) <= 1e-12);
}

TEST_CASE("power iteration fixes the leading eigenvector") {
  const DataMatrix data = fixtures::two_point_dense();
  Vec e1 = Vec::Zero(2);
  e1[0] = 1.0;
  const SpectralReference ref = reference_eigenpairs(data);
  const RunTrace trace = power_run(data, e1, 5, &ref);
  for (const auto& row : trace.rows) CHECK(*row.error_gap <= 1e-30);
}

TEST_CASE("power iteration contracts a diagonal system at the eigenvalue ratio") {
  const DataMatrix data = fixtures::two_point_dense();
  Vec w0(2);
  w0 << 1.0, 1.0;
  w0 /= std::sqrt(2.0);
  std::vector<Snap> snaps;
  power_run(data, w0, 8, nullptr, capture(snaps));
  for (std::size_t t = 0; t < snaps.size(); ++t) {
    const double want = std::pow(0.25, static_cast<double>(t + 1));
    CHECK(std::abs(snaps[t].w[1] / snaps[t].w[0] - want) <= 1e-12 * want);
  }
}

TEST_CASE("momentum at zero reduces to plain power iteration") {
  const auto [data, ref] = synthetic_spectrum(fixtures::clustered_spectrum(), 60, 3);
  const Vec w0 = fixtures::random_unit(10, 8);
  const RunTrace plain = power_run(data, w0, 12, &ref);
  const RunTrace mom = power_momentum_run(data, w0, 0.0, 12, &ref);
  REQUIRE(plain.rows.size() == mom.rows.size());
  for (std::size_t t = 0; t < plain.rows.size(); ++t)
    CHECK(std::abs(*plain.rows[t].error_gap - *mom.rows[t].error_gap) <= 1e-12);
}

TEST_CASE("heavy-ball power matches an extended-precision replay") {
  const DataMatrix data = fixtures::two_point_dense();
  const double beta = 0.25;
  Vec w0(2);
  w0 << 3.0, 4.0;
  w0 /= 5.0;
  std::vector<Snap> snaps;
  power_momentum_run(data, w0, beta, 30, nullptr, capture(snaps));
  REQUIRE(snaps.size() == 30);

  // the covariance is diag(2, 1/2), so each coordinate obeys its own recurrence
  long double prev[2] = {w0[0], w0[1]};
  long double cur[2] = {2.0L * prev[0], 0.5L * prev[1]};
  const long double lam[2] = {2.0L, 0.5L};
  for (std::size_t t = 0; t < snaps.size(); ++t) {
    if (t > 0) {
      long double next[2];
      for (int i = 0; i < 2; ++i) next[i] = 2.0L * lam[i] * cur[i] - beta * prev[i];
      prev[0] = cur[0];
      prev[1] = cur[1];
      cur[0] = next[0];
      cur[1] = next[1];
    }
    const long double norm = std::sqrt(cur[0] * cur[0] + cur[1] * cur[1]);
    CHECK(std::abs(snaps[t].w[0] - static_cast<double>(cur[0] / norm)) <= 1e-12);
    CHECK(std::abs(snaps[t].w[1] - static_cast<double>(cur[1] / norm)) <= 1e-12);
  }
}

TEST_CASE("momentum set to the squared trailing eigenvalue accelerates convergence") {
  const auto [data, ref] = synthetic_spectrum(fixtures::clustered_spectrum(), 60, 5);
  const Vec w0 = fixtures::random_unit(10, 2);
  const double beta = ref.lambda2() * ref.lambda2();
  // past the heavy-ball transient, the accelerated rate dominates
  const RunTrace plain = power_run(data, w0, 30, &ref);
  const RunTrace mom = power_momentum_run(data, w0, beta, 30, &ref);
  CHECK(*mom.final_gap() < *plain.final_gap());
}

TEST_CASE("joint rescaling leaves the sample path unchanged") {
  // lambda1 = 1 keeps the unrescaled iterates in range for the comparison
  const auto [data, ref] = synthetic_spectrum(fixtures::clustered_spectrum(), 40, 7);
  const Vec w0 = fixtures::random_unit(10, 6);
  const RunTrace on = power_momentum_run(data, w0, 0.25, 30, &ref);
  const RunTrace off = power_momentum_run(data, w0, 0.25, 30, &ref, {}, false);
  REQUIRE(on.rows.size() == off.rows.size());
  for (std::size_t t = 0; t < on.rows.size(); ++t)
    CHECK(std::abs(*on.rows[t].error_gap - *off.rows[t].error_gap) <=
          1e-9 * std::max(*on.rows[t].error_gap, 1e-18));
}

TEST_CASE("variance-reduced gradient reproduces the hand-computed value") {
  const DataMatrix data = fixtures::two_point_dense();
  IterateState state;
  state.outer = Vec::Zero(2);
  state.outer[0] = 1.0;
  state.outer_grad = covariance_matvec(data, state.outer);
  state.w_cur = Vec(2);
  state.w_cur << 1.0, 1.0;
  state.w_cur /= std::sqrt(2.0);
  MiniBatch batch;
  batch.indices = {1};
  const Vec g = vr_gradient(state, data, batch);
  CHECK(std::abs(g[0] - std::sqrt(2.0)) <= 1e-15);
  CHECK(std::abs(g[1] - 1.0 / std::sqrt(2.0)) <= 1e-15);
}

TEST_CASE("variance-reduced gradient is exact at the anchor") {
  const DataMatrix data = fixtures::two_point_dense();
  IterateState state;
  state.outer = Vec::Zero(2);
  state.outer[0] = 1.0;
  state.outer_grad = covariance_matvec(data, state.outer);
  state.w_cur = state.outer;
  MiniBatch batch;
  batch.indices = {1};
  const Vec g = vr_gradient(state, data, batch);
  CHECK(g[0] == state.outer_grad[0]);
  CHECK(g[1] == state.outer_grad[1]);
}

TEST_CASE("variance-reduced gradient is unbiased over all batches") {
  const DataMatrix data = fixtures::random_dense(3, 6, 14);
  IterateState state;
  state.outer = fixtures::random_unit(3, 1);
  state.outer_grad = covariance_matvec(data, state.outer);
  state.w_cur = fixtures::random_unit(3, 2);
  Vec mean = Vec::Zero(3);
  std::size_t count = 0;
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = i + 1; j < 6; ++j) {
      MiniBatch batch;
      batch.indices = {i, j};
      mean += vr_gradient(state, data, batch);
      ++count;
    }
  mean /= static_cast<double>(count);
  const Vec want = covariance_matvec(data, state.w_cur);
  CHECK((mean - want).norm() <= 1e-13 * want.norm());
}

TEST_CASE("full-batch unit step matches heavy-ball power exactly") {
  const auto [data, ref] = synthetic_spectrum(fixtures::clustered_spectrum(), 40, 9);
  const Vec w0 = fixtures::random_unit(10, 4);
  const double beta = 0.3;

  std::vector<Snap> vr_snaps, pm_snaps;
  SolverConfig cfg = full_batch_cfg(1.0, beta, 10, 1, data.n);
  vr_hb_power_run(data, w0, cfg, &ref, capture(vr_snaps));
  power_momentum_run(data, w0, beta, 10, &ref, capture(pm_snaps));
  REQUIRE(vr_snaps.size() == pm_snaps.size());
  for (std::size_t t = 0; t < vr_snaps.size(); ++t)
    CHECK((vr_snaps[t].w - pm_snaps[t].w).lpNorm<Eigen::Infinity>() <= 1e-10);
}

TEST_CASE("full-batch run matches an extended-precision replay") {
  const DataMatrix data = fixtures::two_point_dense();
  const SpectralReference ref = reference_eigenpairs(data);
  const double eta = 0.5;
  const double beta = momentum_from_lambda2(eta, ref.lambda2());
  Vec w0(2);
  w0 << 3.0, 4.0;
  w0 /= 5.0;
  SolverConfig cfg = full_batch_cfg(eta, beta, 4, 3, data.n);
  const RunTrace trace = vr_hb_power_run(data, w0, cfg, &ref);
  REQUIRE(trace.rows.size() == 4);  // initial row plus one per epoch

  const long double lam[2] = {2.0L, 0.5L};
  long double anchor[2] = {w0[0], w0[1]};
  for (std::size_t epoch = 0; epoch < 3; ++epoch) {
    long double grad[2] = {lam[0] * anchor[0], lam[1] * anchor[1]};
    long double prev[2] = {anchor[0], anchor[1]};
    long double cur[2];
    for (int i = 0; i < 2; ++i) cur[i] = (1.0L - eta) * prev[i] + eta * grad[i];
    for (std::size_t t = 1; t + 1 <= 4; ++t) {
      const long double anorm2 = anchor[0] * anchor[0] + anchor[1] * anchor[1];
      const long double c = (anchor[0] * cur[0] + anchor[1] * cur[1]) / anorm2;
      long double g[2];
      for (int i = 0; i < 2; ++i) g[i] = c * grad[i] + lam[i] * (cur[i] - c * anchor[i]);
      long double next[2];
      for (int i = 0; i < 2; ++i) next[i] = 2.0L * ((1.0L - eta) * cur[i] + eta * g[i]) - beta * prev[i];
      prev[0] = cur[0];
      prev[1] = cur[1];
      cur[0] = next[0];
      cur[1] = next[1];
      const long double norm = std::sqrt(cur[0] * cur[0] + cur[1] * cur[1]);
      prev[0] /= norm;
      prev[1] /= norm;
      cur[0] /= norm;
      cur[1] /= norm;
    }
    anchor[0] = cur[0];
    anchor[1] = cur[1];
    const long double n2 = anchor[0] * anchor[0] + anchor[1] * anchor[1];
    const double gap = static_cast<double>(anchor[1] * anchor[1] / n2);
    const double got = *trace.rows[epoch + 1].error_gap;
    CHECK(std::abs(got - gap) <= std::max(1e-15, 1e-9 * gap));
  }
}

TEST_CASE("full-batch trajectory follows the coefficient recurrences") {
  const auto [data, ref] = synthetic_spectrum(fixtures::clustered_spectrum(), 50, 11);
  const Vec w0 = fixtures::random_unit(10, 12);
  const double eta = 0.7;
  const double beta = momentum_from_lambda2(eta, ref.lambda2());
  std::vector<Snap> snaps;
  SolverConfig cfg = full_batch_cfg(eta, beta, 6, 1, data.n);
  vr_hb_power_run(data, w0, cfg, &ref, capture(snaps));
  REQUIRE(snaps.size() == 6);

  std::vector<double> c0(10);
  for (Eigen::Index k = 0; k < 10; ++k) c0[static_cast<std::size_t>(k)] = ref.basis.col(k).dot(w0);
  for (std::size_t t = 1; t <= snaps.size(); ++t) {
    const Vec& w = snaps[t - 1].w;
    double tan2 = 0.0;
    const double lead = ref.basis.col(0).dot(w);
    for (Eigen::Index k = 1; k < 10; ++k) tan2 += std::pow(ref.basis.col(k).dot(w), 2);
    tan2 /= lead * lead;
    const double want = predicted_full_batch_gap(eta, ref.eigenvalues, c0, t);
    CHECK(std::abs(tan2 - want) <= 1e-9 * want);

    // cumulative rescale factor restores the raw leading coefficient
    const double raw = std::abs(lead) * std::exp(snaps[t - 1].log_scale);
    const RateParams rp = rate_params(eta, ref.lambda1(), ref.lambda2());
    const double want_raw = std::sqrt(p_poly(t, rp.alpha1, rp.beta)) * std::abs(c0[0]);
    CHECK(std::abs(raw - want_raw) <= 1e-9 * want_raw);
  }
}

TEST_CASE("full-batch run contracts monotonically on the two-point set") {
  const DataMatrix data = fixtures::two_point_dense();
  const SpectralReference ref = reference_eigenpairs(data);
  const Vec w0 = fixtures::random_unit(2, 19);
  SolverConfig cfg = full_batch_cfg(0.5, momentum_from_lambda2(0.5, 0.5), 5, 10, data.n);
  const RunTrace trace = vr_hb_power_run(data, w0, cfg, &ref);
  REQUIRE(trace.rows.size() == 11);
  double prev = 1.0;
  for (const auto& row : trace.rows) {
    CHECK(*row.error_gap <= prev + 1e-20);
    prev = *row.error_gap;
  }
  CHECK(*trace.final_gap() <= 1e-8);
}

TEST_CASE("stochastic runs are deterministic for a fixed seed") {
  const auto [data, ref] = synthetic_spectrum(fixtures::clustered_spectrum(), 50, 23);
  const Vec w0 = fixtures::random_unit(10, 3);
  SolverConfig cfg;
  cfg.eta = 0.25;
  cfg.momentum = Momentum::fixed;
  cfg.beta = momentum_from_lambda2(0.25, ref.lambda2());
  cfg.batch_size = 5;
  cfg.epoch_len = 10;
  cfg.epochs = 4;
  cfg.seed = 99;
  const RunTrace a = vr_hb_power_run(data, w0, cfg, &ref);
  const RunTrace b = vr_hb_power_run(data, w0, cfg, &ref);
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(*a.rows[i].error_gap == *b.rows[i].error_gap);
    CHECK(a.rows[i].data_passes == b.rows[i].data_passes);
  }
}

TEST_CASE("negating the start leaves the error trace unchanged") {
  const auto [data, ref] = synthetic_spectrum(fixtures::clustered_spectrum(), 50, 29);
  const Vec w0 = fixtures::random_unit(10, 5);
  SolverConfig cfg;
  cfg.eta = 0.5;
  cfg.momentum = Momentum::fixed;
  cfg.beta = momentum_from_lambda2(0.5, ref.lambda2());
  cfg.batch_size = 5;
  cfg.epoch_len = 10;
  cfg.epochs = 3;
  cfg.seed = 7;
  const RunTrace a = vr_hb_power_run(data, w0, cfg, &ref);
  const RunTrace b = vr_hb_power_run(data, Vec(-w0), cfg, &ref);
  for (std::size_t i = 0; i < a.rows.size(); ++i) CHECK(*a.rows[i].error_gap == *b.rows[i].error_gap);
}

TEST_CASE("mini-batch runs drive the mean gap down") {
  const auto [data, ref] = synthetic_spectrum(fixtures::clustered_spectrum(), 200, 31);
  double first = 0.0, last = 0.0;
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    SolverConfig cfg;
    cfg.eta = 0.1;
    cfg.momentum = Momentum::fixed;
    cfg.beta = momentum_from_lambda2(0.1, ref.lambda2());
    cfg.batch_size = 10;
    cfg.epoch_len = 20;
    cfg.epochs = 8;
    cfg.seed = seed;
    const RunTrace tr = vr_hb_power_run(data, fixtures::random_unit(10, seed), cfg, &ref);
    REQUIRE_FALSE(tr.diverged);
    first += *tr.rows.front().error_gap;
    last += *tr.rows.back().error_gap;
  }
  CHECK(last < 0.1 * first);
}

TEST_CASE("trailing eigenvalue estimate reproduces the worked example") {
  const DataMatrix data = fixtures::two_point_dense();
  Vec prev(2);
  prev << 1.0, 1.0;
  prev /= std::sqrt(2.0);
  Vec cur = Vec::Zero(2);
  cur[0] = 1.0;
  const Vec prev_grad = covariance_matvec(data, prev);
  const Vec cur_grad = covariance_matvec(data, cur);
  const double theta = prev.dot(cur);
  const auto est = estimate_lambda2(theta, prev, prev_grad, cur, cur_grad);
  REQUIRE(est.has_value());
  CHECK(std::abs(*est - 0.5) <= 1e-14);
}

TEST_CASE("trailing eigenvalue estimate declines aligned epochs") {
  Vec e1 = Vec::Zero(2);
  e1[0] = 1.0;
  Vec g(2);
  g << 2.0, 0.0;
  CHECK_FALSE(estimate_lambda2(1.0, e1, g, e1, g).has_value());
}

TEST_CASE("adaptive momentum converges to the oracle weight") {
  const auto [data, ref] = synthetic_spectrum(fixtures::clustered_spectrum(), 100, 37);
  SolverConfig cfg;
  cfg.eta = 0.5;
  cfg.momentum = Momentum::adaptive;
  cfg.batch_size = data.n;
  cfg.epoch_len = 5;
  cfg.epochs = 10;
  const RunTrace trace = vr_hb_power_run(data, fixtures::random_unit(10, 6), cfg, &ref);
  REQUIRE(trace.rows.size() == 11);
  CHECK_FALSE(trace.rows[1].lambda2_hat.has_value());  // warmup epochs report nothing
  CHECK_FALSE(trace.rows[2].lambda2_hat.has_value());
  REQUIRE(trace.rows[3].lambda2_hat.has_value());
  REQUIRE(trace.rows[10].lambda2_hat.has_value());
  CHECK(std::abs(*trace.rows[10].lambda2_hat - ref.lambda2()) <= 1e-2);
}

TEST_CASE("fixed-momentum traces omit the estimator column") {
  const DataMatrix data = fixtures::two_point_dense();
  const SpectralReference ref = reference_eigenpairs(data);
  SolverConfig cfg = full_batch_cfg(0.5, 0.5625, 4, 3, data.n);
  const RunTrace trace = vr_hb_power_run(data, fixtures::random_unit(2, 8), cfg, &ref);
  for (const auto& row : trace.rows) CHECK_FALSE(row.lambda2_hat.has_value());
}

TEST_CASE("momentum schedule from the estimate matches the closed form") {
  CHECK(momentum_from_lambda2(1.0, 0.5) == 0.25);
  CHECK(momentum_from_lambda2(0.5, 0.5) == 0.5625);
  CHECK(momentum_from_lambda2(0.7, 1.0) == 1.0);  // no spectral gap leaves the full weight
}

TEST_CASE("joint rescale normalizes the pair and logs the factor") {
  IterateState state;
  state.w_prev = Vec::Zero(2);
  state.w_prev[0] = 1.0;
  state.w_cur = Vec::Zero(2);
  state.w_cur[0] = 2.0;
  state.log_scale = 0.0;
  stability_rescale(state);
  CHECK(state.w_cur[0] == 1.0);
  CHECK(state.w_prev[0] == 0.5);
  CHECK(std::abs(state.log_scale - std::log(2.0)) <= 1e-15);
}

TEST_CASE("a blown-up update is reported as divergence, not an exception") {
  const DataMatrix data = fixtures::two_point_dense();
  const SpectralReference ref = reference_eigenpairs(data);
  SolverConfig cfg = full_batch_cfg(0.5, 1e9, 4, 3, data.n);
  const RunTrace trace = vr_hb_power_run(data, fixtures::random_unit(2, 9), cfg, &ref);
  CHECK(trace.diverged);
  CHECK(trace.diverged_epoch == 1);
  CHECK(trace.rows.size() == 1);  // only the initial row survives
}

TEST_CASE("epoch accounting charges one full pass plus the inner batches") {
  const DataMatrix data = fixtures::two_point_dense();
  const SpectralReference ref = reference_eigenpairs(data);
  SolverConfig cfg;
  cfg.eta = 0.5;
  cfg.momentum = Momentum::fixed;
  cfg.beta = 0.5;
  cfg.batch_size = 1;
  cfg.epoch_len = 3;
  cfg.epochs = 2;
  const RunTrace trace = vr_hb_power_run(data, fixtures::random_unit(2, 10), cfg, &ref);
  REQUIRE(trace.rows.size() == 3);
  CHECK(trace.rows[0].epoch == 0);
  CHECK(trace.rows[0].data_passes == 0.0);
  CHECK(trace.rows[1].epoch == 1);
  CHECK(trace.rows[2].epoch == 2);
  CHECK(trace.rows[1].data_passes == 2.0);  // 1 + (3 - 1) * (1/2)
  CHECK(trace.rows[2].data_passes == 4.0);
}

TEST_CASE("solver rejects malformed configurations") {
  const DataMatrix data = fixtures::two_point_dense();
  Vec w0 = fixtures::random_unit(2, 11);
  SolverConfig cfg = full_batch_cfg(0.5, 0.5, 4, 2, data.n);
  SolverConfig bad = cfg;
  bad.eta = 0.0;
  CHECK_THROWS_AS(vr_hb_power_run(data, w0, bad), argument_error);
  bad = cfg;
  bad.eta = 1.5;
  CHECK_THROWS_AS(vr_hb_power_run(data, w0, bad), argument_error);
  bad = cfg;
  bad.batch_size = 3;
  CHECK_THROWS_AS(vr_hb_power_run(data, w0, bad), argument_error);
  bad = cfg;
  bad.epoch_len = 0;
  CHECK_THROWS_AS(vr_hb_power_run(data, w0, bad), argument_error);
  CHECK_THROWS_AS(vr_hb_power_run(data, Vec(2.0 * w0), cfg), argument_error);
}

TEST_CASE("unit-step variance-reduced baseline fixes the leading eigenvector") {
  const DataMatrix data = fixtures::two_point_dense();
  const SpectralReference ref = reference_eigenpairs(data);
  Vec e1 = Vec::Zero(2);
  e1[0] = 1.0;
  SolverConfig cfg;
  cfg.eta = 0.4;
  cfg.batch_size = 1;
  cfg.epoch_len = 4;
  cfg.epochs = 3;
  const RunTrace trace = vr_pca_run(data, e1, cfg, &ref);
  for (const auto& row : trace.rows) CHECK(*row.error_gap <= 1e-28);
}

TEST_CASE("variance-reduced baseline converges on the two-point set") {
  const DataMatrix data = fixtures::two_point_dense();
  const SpectralReference ref = reference_eigenpairs(data);
  SolverConfig cfg;
  cfg.eta = 0.3;
  cfg.batch_size = data.n;
  cfg.epoch_len = 6;
  cfg.epochs = 8;
  cfg.seed = 1;
  const RunTrace trace = vr_pca_run(data, fixtures::random_unit(2, 13), cfg, &ref);
  REQUIRE_FALSE(trace.diverged);
  CHECK(*trace.final_gap() < 1e-3);
  const RunTrace again = vr_pca_run(data, fixtures::random_unit(2, 13), cfg, &ref);
  CHECK(*again.final_gap() == *trace.final_gap());
}
