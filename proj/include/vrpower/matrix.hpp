#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "vrpower/errors.hpp"
#include "vrpower/rng.hpp"

namespace vrpower {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Norms below this are treated as underflow rather than normalized through.
inline constexpr double kNormFloor = 1e-150;

// Dataset of n vectors a_0..a_{n-1} in R^d, the columns of a d x n matrix A.
// The sample covariance C = (1/n) A A^T is never formed by the iteration
// kernels; they make two passes over the data instead. Sparse storage is
// row-compressed over the n x d design matrix (row i holds a_i).
struct DataMatrix {
  std::size_t n = 0;
  std::size_t d = 0;
  bool sparse = false;

  Mat dense;  // d x n, column i = a_i (dense storage only)

  std::vector<std::size_t> row_ptr;  // size n + 1 (sparse storage only)
  std::vector<std::size_t> col_idx;  // feature ids, sorted within each row
  std::vector<double> vals;

  // a_i . v
  double dot(std::size_t i, const Vec& v) const {
    if (!sparse) return dense.col(static_cast<Eigen::Index>(i)).dot(v);
    double s = 0.0;
    for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) s += vals[k] * v[static_cast<Eigen::Index>(col_idx[k])];
    return s;
  }

  // out += c * a_i
  void add_scaled(std::size_t i, double c, Vec& out) const {
    if (!sparse) {
      out += c * dense.col(static_cast<Eigen::Index>(i));
      return;
    }
    for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) out[static_cast<Eigen::Index>(col_idx[k])] += c * vals[k];
  }
};

inline DataMatrix make_dense(Mat columns) {
  if (columns.cols() < 1 || columns.rows() < 1) throw argument_error("dataset must be nonempty");
  DataMatrix m;
  m.n = static_cast<std::size_t>(columns.cols());
  m.d = static_cast<std::size_t>(columns.rows());
  m.sparse = false;
  m.dense = std::move(columns);
  return m;
}

// Rows supplied one data vector at a time as (feature, value) pairs with
// sorted, distinct feature ids in [0, d).
inline DataMatrix make_sparse(std::size_t n, std::size_t d,
                              std::vector<std::size_t> row_ptr,
                              std::vector<std::size_t> col_idx,
                              std::vector<double> vals) {
  if (n < 1 || d < 1) throw argument_error("dataset must be nonempty");
  if (row_ptr.size() != n + 1 || row_ptr.front() != 0 || row_ptr.back() != col_idx.size() ||
      col_idx.size() != vals.size())
    throw argument_error("inconsistent sparse layout");
  for (std::size_t i = 0; i < n; ++i) {
    if (row_ptr[i + 1] < row_ptr[i]) throw argument_error("row_ptr must be nondecreasing");
    for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) {
      if (col_idx[k] >= d) throw argument_error("feature id out of range");
      if (k > row_ptr[i] && col_idx[k] <= col_idx[k - 1]) throw argument_error("feature ids must be sorted and distinct within a row");
    }
  }
  DataMatrix m;
  m.n = n;
  m.d = d;
  m.sparse = true;
  m.row_ptr = std::move(row_ptr);
  m.col_idx = std::move(col_idx);
  m.vals = std::move(vals);
  return m;
}

// Uniformly sampled batch of data vector indices.
struct MiniBatch {
  std::vector<std::size_t> indices;  // in [0, n), sorted; distinct unless drawn with replacement
  std::size_t size() const { return indices.size(); }
};

// C v = (1/n) A (A^T v), two passes, C never materialized.
inline Vec covariance_matvec(const DataMatrix& data, const Vec& v) {
  if (static_cast<std::size_t>(v.size()) != data.d) throw argument_error("vector length must equal d");
  if (!data.sparse) {
    Vec tmp = data.dense.transpose() * v;
    Vec out = data.dense * tmp;
    out /= static_cast<double>(data.n);
    return out;
  }
  Vec out = Vec::Zero(static_cast<Eigen::Index>(data.d));
  for (std::size_t i = 0; i < data.n; ++i) data.add_scaled(i, data.dot(i, v), out);
  out /= static_cast<double>(data.n);
  return out;
}

// (1/|S|) sum_{l in S} a_l (a_l^T v)
inline Vec minibatch_matvec(const DataMatrix& data, const MiniBatch& batch, const Vec& v) {
  if (static_cast<std::size_t>(v.size()) != data.d) throw argument_error("vector length must equal d");
  if (batch.indices.empty()) throw argument_error("batch must be nonempty");
  Vec out = Vec::Zero(static_cast<Eigen::Index>(data.d));
  for (std::size_t l : batch.indices) {
    if (l >= data.n) throw argument_error("batch index out of range");
    data.add_scaled(l, data.dot(l, v), out);
  }
  out /= static_cast<double>(batch.size());
  return out;
}

// v - (w0^T v / ||w0||^2) w0
inline Vec project_orthogonal(const Vec& w0, const Vec& v) {
  if (w0.size() != v.size()) throw argument_error("length mismatch");
  const double nsq = w0.squaredNorm();
  if (nsq == 0.0 || !std::isfinite(nsq)) throw argument_error("reference vector must be nonzero and finite");
  return v - (w0.dot(v) / nsq) * w0;
}

inline Vec normalize(const Vec& v) {
  const double nrm = v.norm();
  if (!std::isfinite(nrm)) throw numeric_error("non-finite vector norm");
  if (nrm < kNormFloor) throw numeric_error("vector norm underflow");
  return v / nrm;
}

// w^T C w / w^T w
inline double rayleigh_quotient(const DataMatrix& data, const Vec& w) {
  const double nsq = w.squaredNorm();
  if (nsq == 0.0) throw argument_error("vector must be nonzero");
  return w.dot(covariance_matvec(data, w)) / nsq;
}

// 1 - (w^T u1)^2 for unit w, u1. The norm check keeps silent drift out of
// reported metrics.
inline double error_gap(const Vec& w, const Vec& u1) {
  if (w.size() != u1.size()) throw argument_error("length mismatch");
  if (std::abs(w.norm() - 1.0) > 1e-9 || std::abs(u1.norm() - 1.0) > 1e-9)
    throw argument_error("error_gap expects unit vectors");
  const double c = w.dot(u1);
  return std::clamp(1.0 - c * c, 0.0, 1.0);
}

// Uniform batch of `size` distinct indices out of n (partial Fisher-Yates),
// returned sorted.
inline MiniBatch sample_minibatch(std::size_t n, std::size_t size, Rng& rng) {
  if (size < 1 || size > n) throw argument_error("batch size must be in [1, n]");
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < size; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.next_below(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(size);
  std::sort(pool.begin(), pool.end());
  return MiniBatch{std::move(pool)};
}

// Independent uniform draws; duplicates allowed.
inline MiniBatch sample_minibatch_with_replacement(std::size_t n, std::size_t size, Rng& rng) {
  if (size < 1 || n < 1) throw argument_error("batch size must be at least 1");
  std::vector<std::size_t> idx(size);
  for (auto& v : idx) v = static_cast<std::size_t>(rng.next_below(n));
  std::sort(idx.begin(), idx.end());
  return MiniBatch{std::move(idx)};
}

// Explicit C for small problems only; oracle checks and the K estimator use
// it, the solvers never do.
inline Mat explicit_covariance(const DataMatrix& data, std::size_t max_d = 512) {
  if (data.d > max_d) throw capacity_error("explicit covariance limited to d <= " + std::to_string(max_d));
  const auto d = static_cast<Eigen::Index>(data.d);
  if (!data.sparse) return (data.dense * data.dense.transpose()) / static_cast<double>(data.n);
  Mat c = Mat::Zero(d, d);
  for (std::size_t i = 0; i < data.n; ++i)
    for (std::size_t k1 = data.row_ptr[i]; k1 < data.row_ptr[i + 1]; ++k1)
      for (std::size_t k2 = data.row_ptr[i]; k2 < data.row_ptr[i + 1]; ++k2)
        c(static_cast<Eigen::Index>(data.col_idx[k1]), static_cast<Eigen::Index>(data.col_idx[k2])) += data.vals[k1] * data.vals[k2];
  c /= static_cast<double>(data.n);
  return c;
}

// a_l a_l^T as a dense column for batch enumeration; |S| * (that) averaged.
inline Mat minibatch_covariance(const DataMatrix& data, const MiniBatch& batch, std::size_t max_d = 512) {
  if (data.d > max_d) throw capacity_error("explicit covariance limited to d <= " + std::to_string(max_d));
  if (batch.indices.empty()) throw argument_error("batch must be nonempty");
  const auto d = static_cast<Eigen::Index>(data.d);
  Mat c = Mat::Zero(d, d);
  Vec col(d);
  for (std::size_t l : batch.indices) {
    if (l >= data.n) throw argument_error("batch index out of range");
    col.setZero();
    data.add_scaled(l, 1.0, col);
    c.noalias() += col * col.transpose();
  }
  c /= static_cast<double>(batch.size());
  return c;
}

}  // namespace vrpower
