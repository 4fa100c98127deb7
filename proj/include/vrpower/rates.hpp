#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "vrpower/matrix.hpp"

namespace vrpower {

// Scalars driving the heavy-ball recursion at step size eta on a spectrum
// with top eigenvalues lambda1 > lambda2: alpha_k = 4 (1 - eta + eta
// lambda_k)^2, beta = (1 - eta + eta lambda2)^2. alpha2 == 4 beta by
// construction, and gamma = alpha1 / beta >= 4 measures the usable gap.
struct RateParams {
  double eta = 0.0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double alpha1 = 0.0;
  double alpha2 = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
};

inline double momentum_factor(double eta, double lambda) {
  const double b = 1.0 - eta + eta * lambda;
  return b * b;
}

inline RateParams rate_params(double eta, double lambda1, double lambda2) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw argument_error("eta must be in [0, 1]");
  if (!(lambda1 > lambda2 && lambda2 >= 0.0)) throw argument_error("need lambda1 > lambda2 >= 0");
  RateParams r;
  r.eta = eta;
  r.lambda1 = lambda1;
  r.lambda2 = lambda2;
  r.alpha1 = 4.0 * momentum_factor(eta, lambda1);
  r.beta = momentum_factor(eta, lambda2);
  r.alpha2 = 4.0 * r.beta;
  r.gamma = r.beta == 0.0 ? std::numeric_limits<double>::infinity() : r.alpha1 / r.beta;
  return r;
}

namespace detail {

// Shared third-order recurrence behind p_t and q_t:
//   x_t = (a - b) x_{t-1} - b (a - b) x_{t-2} + b^3 x_{t-3}.
inline double run_pq_recurrence(std::size_t t, double a, double b, double x0, double x1, double x2) {
  if (t == 0) return x0;
  if (t == 1) return x1;
  if (t == 2) return x2;
  double m3 = x0, m2 = x1, m1 = x2, x = x2;
  for (std::size_t k = 3; k <= t; ++k) {
    x = (a - b) * m1 - b * (a - b) * m2 + b * b * b * m3;
    if (!std::isfinite(x)) throw numeric_error("recurrence overflow");
    m3 = m2;
    m2 = m1;
    m1 = x;
  }
  return x;
}

}  // namespace detail

// Growth coefficient of the squared component along an eigenvalue with
// parameter a, under momentum b: p_0 = 1, p_1 = a/4, p_2 = (a/2 - b)^2.
inline double p_poly(std::size_t t, double a, double b) {
  if (!(a >= 0.0 && b >= 0.0)) throw argument_error("need a, b >= 0");
  const double p2 = (a / 2.0 - b) * (a / 2.0 - b);
  return detail::run_pq_recurrence(t, a, b, 1.0, a / 4.0, p2);
}

// Companion coefficient with q_0 = 1, q_1 = a, q_2 = (a - b)^2.
inline double q_poly(std::size_t t, double a, double b) {
  if (!(a >= 0.0 && b >= 0.0)) throw argument_error("need a, b >= 0");
  return detail::run_pq_recurrence(t, a, b, 1.0, a, (a - b) * (a - b));
}

// r_t = a r_{t-1} + b r_{t-2}, r_0 = 1, r_1 = a. Fibonacci at a = b = 1.
inline double r_poly(std::size_t t, double a, double b) {
  if (!(a >= 0.0 && b >= 0.0)) throw argument_error("need a, b >= 0");
  if (t == 0) return 1.0;
  double prev = 1.0, cur = a;
  for (std::size_t k = 2; k <= t; ++k) {
    const double next = a * cur + b * prev;
    if (!std::isfinite(next)) throw numeric_error("recurrence overflow");
    prev = cur;
    cur = next;
  }
  return cur;
}

// Real-root regime closed forms, valid only for a > 4b. The roots are
// s +- u with s = sqrt(a)/2, u = sqrt(a - 4b)/2.
inline double p_closed_form(std::size_t t, double a, double b) {
  if (!(b >= 0.0)) throw argument_error("need b >= 0");
  if (!(a > 4.0 * b)) throw argument_error("closed form requires a > 4b");
  const double s = std::sqrt(a) / 2.0;
  const double u = std::sqrt(a - 4.0 * b) / 2.0;
  const double hi = std::pow(s + u, static_cast<double>(t));
  const double lo = std::pow(s - u, static_cast<double>(t));
  const double half_sum = 0.5 * hi + 0.5 * lo;
  return half_sum * half_sum;
}

inline double q_closed_form(std::size_t t, double a, double b) {
  if (!(b >= 0.0)) throw argument_error("need b >= 0");
  if (!(a > 4.0 * b)) throw argument_error("closed form requires a > 4b");
  const double s = std::sqrt(a) / 2.0;
  const double u = std::sqrt(a - 4.0 * b) / 2.0;
  const double diff = std::pow(s + u, static_cast<double>(t) + 1.0) - std::pow(s - u, static_cast<double>(t) + 1.0);
  return diff * diff / (a - 4.0 * b);
}

inline double gamma_of_eta(double eta, double lambda1, double lambda2) {
  return rate_params(eta, lambda1, lambda2).gamma;
}

// Per-epoch decay factor of the (u2 vs u1) component ratio for an epoch of m
// full-batch heavy-ball steps:
//   g = [2^{m+1} / ((sqrt(g') + sqrt(g' - 4))^m + (sqrt(g') - sqrt(g' - 4))^m)]^2
// with g' = gamma(eta). Evaluated in log space so large m cannot overflow.
// eta = 0 is the exact fixed point g = 1.
inline double g_of_eta(double eta, double lambda1, double lambda2, std::size_t m) {
  if (m < 1) throw argument_error("epoch length m must be >= 1");
  const RateParams r = rate_params(eta, lambda1, lambda2);
  if (eta == 0.0) return 1.0;
  if (std::isinf(r.gamma)) return 0.0;
  const double sg = std::sqrt(r.gamma);
  const double sd = std::sqrt(std::max(r.gamma - 4.0, 0.0));
  const double md = static_cast<double>(m);
  // log((sg+sd)^m + (sg-sd)^m) via log-sum-exp; (sg-sd)/(sg+sd) = 1 - 2sd/(sg+sd).
  const double l_hi = md * std::log(sg + sd);
  const double l_rel = md * std::log1p(-2.0 * sd / (sg + sd));
  const double lse = l_hi + std::log1p(std::exp(l_rel));
  const double log_g = 2.0 * ((md + 1.0) * std::log(2.0) - lse);
  return std::exp(log_g);
}

// Theorem-style deterministic prediction of the component ratio
//   sum_{k>=2} p_t(alpha_k, beta) c_k^2 / (p_t(alpha_1, beta) c_1^2)
// after t full-batch steps from coefficients c_k = u_k . w_0.
inline double predicted_full_batch_gap(double eta, const std::vector<double>& spectrum,
                                       const std::vector<double>& w0_coeffs, std::size_t t) {
  if (spectrum.size() < 2 || spectrum.size() != w0_coeffs.size())
    throw argument_error("need matching spectrum and coefficient lists, d >= 2");
  const RateParams r = rate_params(eta, spectrum[0], spectrum[1]);
  const double c1 = w0_coeffs[0];
  if (c1 == 0.0) throw argument_error("w0 has no component along u1");
  double num = 0.0;
  for (std::size_t k = 1; k < spectrum.size(); ++k) {
    const double ak = 4.0 * momentum_factor(eta, spectrum[k]);
    num += p_poly(t, ak, r.beta) * w0_coeffs[k] * w0_coeffs[k];
  }
  const double den = p_poly(t, r.alpha1, r.beta) * c1 * c1;
  if (!(den > 0.0)) throw numeric_error("degenerate denominator in gap prediction");
  return num / den;
}

// Top eigenvalue of a symmetric PSD matrix by plain power iteration with a
// deterministic, mildly tilted start. Good to ~1e-12 relative.
inline double spectral_norm_psd(const Mat& e) {
  if (e.rows() != e.cols() || e.rows() < 1) throw argument_error("matrix must be square");
  if (e.norm() == 0.0) return 0.0;
  Vec v(e.rows());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = 1.0 + 1e-3 * static_cast<double>(i) / static_cast<double>(v.size());
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < 200000; ++it) {
    Vec ev = e * v;
    const double next = v.dot(ev);
    const double scale = std::max(1.0, std::abs(next));
    if (it > 4 && std::abs(next - lambda) <= 1e-14 * scale && (ev - next * v).norm() <= 1e-11 * scale) return next;
    lambda = next;
    const double nrm = ev.norm();
    if (nrm < 1e-280) return lambda;
    v = ev / nrm;
  }
  return lambda;
}

// ||M|| for symmetric M, via the PSD iteration on M^T M.
inline double spectral_norm_sym(const Mat& m) { return std::sqrt(spectral_norm_psd(m.transpose() * m)); }

enum class KMethod { exact_enumeration, monte_carlo };

namespace detail {

inline double binomial_capped(std::size_t n, std::size_t k, double cap) {
  double c = 1.0;
  const std::size_t kk = std::min(k, n - k);
  for (std::size_t i = 1; i <= kk; ++i) {
    c *= static_cast<double>(n - kk + i) / static_cast<double>(i);
    if (c > cap) return cap + 1.0;
  }
  return c;
}

}  // namespace detail

// Mini-batch noise scale K = || E[(C_t - C)^2] || for uniform batches of the
// given size. Exact enumeration walks every subset (refused above 1e5
// subsets); with replacement the expectation collapses to the single-sample
// second moment divided by the batch size, so it is exact too. Monte Carlo
// averages sampled batches instead.
inline double estimate_K(const DataMatrix& data, std::size_t batch_size, KMethod method,
                         std::size_t samples = 0, std::uint64_t seed = 0,
                         bool with_replacement = false) {
  if (batch_size < 1 || batch_size > data.n) throw argument_error("batch size must be in [1, n]");
  if (data.d > 512) throw capacity_error("K estimation materializes d x d matrices, d <= 512 required");
  const Mat c = explicit_covariance(data);
  const auto d = static_cast<Eigen::Index>(data.d);
  Mat acc = Mat::Zero(d, d);
  if (method == KMethod::exact_enumeration) {
    if (with_replacement) {
      // E[(C_t - C)^2] = (1/|S|) (1/n) sum_i (a_i a_i^T - C)^2
      for (std::size_t i = 0; i < data.n; ++i) {
        const Mat di = minibatch_covariance(data, MiniBatch{{i}}) - c;
        acc.noalias() += di * di;
      }
      acc /= static_cast<double>(data.n) * static_cast<double>(batch_size);
      return spectral_norm_psd(acc);
    }
    if (detail::binomial_capped(data.n, batch_size, 1e5) > 1e5)
      throw capacity_error("too many batches to enumerate (limit 1e5)");
    std::vector<std::size_t> idx(batch_size);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::size_t count = 0;
    while (true) {
      const Mat di = minibatch_covariance(data, MiniBatch{idx}) - c;
      acc.noalias() += di * di;
      ++count;
      // next lexicographic subset
      std::size_t j = batch_size;
      while (j > 0 && idx[j - 1] == data.n - batch_size + j - 1) --j;
      if (j == 0) break;
      ++idx[j - 1];
      for (std::size_t k = j; k < batch_size; ++k) idx[k] = idx[k - 1] + 1;
    }
    acc /= static_cast<double>(count);
    return spectral_norm_psd(acc);
  }
  if (samples < 1) throw argument_error("monte carlo needs samples >= 1");
  Rng rng(seed);
  for (std::size_t s = 0; s < samples; ++s) {
    const MiniBatch b = with_replacement ? sample_minibatch_with_replacement(data.n, batch_size, rng)
                                         : sample_minibatch(data.n, batch_size, rng);
    const Mat di = minibatch_covariance(data, b) - c;
    acc.noalias() += di * di;
  }
  acc /= static_cast<double>(samples);
  return spectral_norm_psd(acc);
}

namespace detail {

inline void require_small_square(const Mat& m, std::size_t limit) {
  if (m.rows() != m.cols()) throw argument_error("matrix must be square");
  if (static_cast<std::size_t>(m.rows()) > limit)
    throw capacity_error("check limited to d <= " + std::to_string(limit));
}

}  // namespace detail

// | ||PC - CP||^2 - (w^T C^2 w - (w^T C w)^2) | with P = I - w w^T; the two
// sides agree for any unit w and symmetric C.
inline double commutator_identity_check(const Mat& c, const Vec& w) {
  detail::require_small_square(c, 64);
  if (w.size() != c.rows()) throw argument_error("length mismatch");
  if (std::abs(w.norm() - 1.0) > 1e-9) throw argument_error("w must be unit");
  const Mat p = Mat::Identity(c.rows(), c.cols()) - w * w.transpose();
  const Mat u = p * c - c * p;
  const double lhs = spectral_norm_psd(u.transpose() * u);
  const Vec cw = c * w;
  const double rhs = cw.squaredNorm() - std::pow(w.dot(cw), 2);
  return std::abs(lhs - rhs);
}

// 2 lambda1^2 (1 - (u1^T w)^2) - (w^T C^2 w - (w^T C w)^2), nonnegative for
// PSD C with top eigenpair (lambda1, u1) and unit w.
inline double quadratic_form_bound_margin(const Mat& c, double lambda1, const Vec& u1, const Vec& w) {
  detail::require_small_square(c, 64);
  if (w.size() != c.rows() || u1.size() != c.rows()) throw argument_error("length mismatch");
  if (std::abs(w.norm() - 1.0) > 1e-9 || std::abs(u1.norm() - 1.0) > 1e-9)
    throw argument_error("w and u1 must be unit");
  const Vec cw = c * w;
  const double variance = cw.squaredNorm() - std::pow(w.dot(cw), 2);
  const double align = u1.dot(w);
  return 2.0 * lambda1 * lambda1 * (1.0 - align * align) - variance;
}

// ||M|| ||P w||^2 - w^T P M P w, nonnegative for symmetric M and any
// projector P.
inline double trace_bound_margin(const Mat& m, const Mat& p, const Vec& w) {
  detail::require_small_square(m, 64);
  if (p.rows() != m.rows() || p.cols() != m.cols() || w.size() != m.rows())
    throw argument_error("shape mismatch");
  if ((p * p - p).norm() > 1e-9 * std::max(1.0, p.norm())) throw argument_error("P must be a projector");
  const Vec pw = p * w;
  return spectral_norm_sym(m) * pw.squaredNorm() - pw.dot(m * pw);
}

}  // namespace vrpower
