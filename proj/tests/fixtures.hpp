#pragma once

#include <vector>

#include "vrpower/data.hpp"
#include "vrpower/matrix.hpp"

// Shared test data and oracles. The oracles compute everything with naive
// dense loops so they share no code path with the library kernels.
namespace fixtures {

// Two points in the plane: a1 = (2, 0), a2 = (0, 1). C = diag(2, 0.5),
// lambda = (2, 0.5), u1 = e1.
inline vrpower::DataMatrix two_point_dense() {
  vrpower::Mat a(2, 2);
  a << 2.0, 0.0,
       0.0, 1.0;
  return vrpower::make_dense(a);
}

inline vrpower::DataMatrix two_point_sparse() {
  return vrpower::make_sparse(2, 2, {0, 1, 2}, {0, 1}, {2.0, 1.0});
}

// d = 10 spectrum with a 0.95 top ratio; paired with n = 200 in most tests.
inline std::vector<double> clustered_spectrum() {
  return {1.0, 0.95, 0.5, 0.4, 0.35, 0.3, 0.25, 0.2, 0.15, 0.1};
}

inline vrpower::Mat densify(const vrpower::DataMatrix& data) {
  vrpower::Mat full = vrpower::Mat::Zero(static_cast<Eigen::Index>(data.d), static_cast<Eigen::Index>(data.n));
  if (data.sparse) {
    for (std::size_t i = 0; i < data.n; ++i)
      for (std::size_t k = data.row_ptr[i]; k < data.row_ptr[i + 1]; ++k)
        full(static_cast<Eigen::Index>(data.col_idx[k]), static_cast<Eigen::Index>(i)) = data.vals[k];
  } else {
    full = data.dense;
  }
  return full;
}

// Naive covariance: C_{jk} = (1/n) sum_i a_i[j] a_i[k], triple loop.
inline vrpower::Mat oracle_covariance(const vrpower::DataMatrix& data) {
  const vrpower::Mat full = densify(data);
  const auto d = full.rows();
  vrpower::Mat c = vrpower::Mat::Zero(d, d);
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index k = 0; k < d; ++k) {
      double s = 0.0;
      for (Eigen::Index i = 0; i < full.cols(); ++i) s += full(j, i) * full(k, i);
      c(j, k) = s / static_cast<double>(full.cols());
    }
  return c;
}

// Naive mat-vec against the oracle covariance.
inline vrpower::Vec oracle_cov_matvec(const vrpower::DataMatrix& data, const vrpower::Vec& v) {
  const vrpower::Mat c = oracle_covariance(data);
  vrpower::Vec out = vrpower::Vec::Zero(c.rows());
  for (Eigen::Index j = 0; j < c.rows(); ++j)
    for (Eigen::Index k = 0; k < c.cols(); ++k) out[j] += c(j, k) * v[k];
  return out;
}

inline vrpower::DataMatrix random_dense(std::size_t d, std::size_t n, std::uint64_t seed) {
  vrpower::Rng rng(seed);
  vrpower::Mat a(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(n));
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i) a(i, j) = rng.normal();
  return vrpower::make_dense(a);
}

// Random sparse data with the given fill fraction; every row keeps at least
// one entry so no data vector is empty.
inline vrpower::DataMatrix random_sparse(std::size_t d, std::size_t n, double fill, std::uint64_t seed) {
  vrpower::Rng rng(seed);
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::size_t> col_idx;
  std::vector<double> vals;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t added = 0;
    for (std::size_t j = 0; j < d; ++j) {
      if (rng.uniform01() < fill) {
        col_idx.push_back(j);
        vals.push_back(rng.normal());
        ++added;
      }
    }
    if (added == 0) {
      col_idx.push_back(static_cast<std::size_t>(rng.next_below(d)));
      vals.push_back(rng.normal());
    }
    row_ptr.push_back(col_idx.size());
  }
  return vrpower::make_sparse(n, d, std::move(row_ptr), std::move(col_idx), std::move(vals));
}

inline vrpower::DataMatrix to_dense_copy(const vrpower::DataMatrix& data) {
  return vrpower::make_dense(densify(data));
}

inline vrpower::Vec random_unit(std::size_t d, std::uint64_t seed) {
  vrpower::Rng rng(seed);
  vrpower::Vec w(static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = rng.normal();
  return vrpower::normalize(w);
}

}  // namespace fixtures
