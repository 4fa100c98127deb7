#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "vrpower/matrix.hpp"

namespace vrpower {

// Ground truth about the top of a covariance spectrum. Solvers never see
// this; the harness uses it for the error metric only. `basis` holds all
// eigenvectors when the spectrum is fully known, otherwise just u1 (and u2).
struct SpectralReference {
  std::vector<double> eigenvalues;  // descending, at least the top two
  Vec u1;
  Vec u2;
  Mat basis;  // d x k, column j = u_{j+1}

  double lambda1() const { return eigenvalues.at(0); }
  double lambda2() const { return eigenvalues.at(1); }
  double gap() const { return lambda1() - lambda2(); }
  double ratio() const { return lambda2() / lambda1(); }
};

namespace detail {

inline double parse_double_token(std::string_view tok, std::size_t line, const char* what) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  double out = 0.0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size())
    throw parse_error(line, std::string("bad ") + what + " '" + std::string(tok) + "'");
  return out;
}

}  // namespace detail

// LIBSVM lines: "<label> <idx>:<val> ...". Indices are 1-based and may appear
// out of order; labels are read and discarded. Dimension is the largest index
// seen anywhere in the file.
inline DataMatrix parse_libsvm(std::istream& in) {
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::size_t> col_idx;
  std::vector<double> vals;
  std::vector<std::pair<std::size_t, double>> row;
  std::size_t max_idx = 0;
  std::size_t lineno = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    std::string_view rest(line);
    auto next_token = [&]() {
      const auto start = rest.find_first_not_of(" \t\r");
      if (start == std::string_view::npos) return std::string_view{};
      rest.remove_prefix(start);
      const auto end = rest.find_first_of(" \t\r");
      std::string_view tok = rest.substr(0, end);
      rest.remove_prefix(end == std::string_view::npos ? rest.size() : end);
      return tok;
    };
    detail::parse_double_token(next_token(), lineno, "label");
    row.clear();
    for (std::string_view tok = next_token(); !tok.empty(); tok = next_token()) {
      const auto colon = tok.find(':');
      if (colon == std::string_view::npos || colon == 0 || colon + 1 == tok.size())
        throw parse_error(lineno, "expected <index>:<value>, got '" + std::string(tok) + "'");
      std::size_t idx = 0;
      const auto ires = std::from_chars(tok.data(), tok.data() + colon, idx);
      if (ires.ec != std::errc{} || ires.ptr != tok.data() + colon)
        throw parse_error(lineno, "bad feature index '" + std::string(tok.substr(0, colon)) + "'");
      if (idx == 0) throw parse_error(lineno, "feature indices are 1-based, got 0");
      const double v = detail::parse_double_token(tok.substr(colon + 1), lineno, "feature value");
      row.emplace_back(idx - 1, v);
      max_idx = std::max(max_idx, idx);
    }
    std::sort(row.begin(), row.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t k = 1; k < row.size(); ++k)
      if (row[k].first == row[k - 1].first)
        throw parse_error(lineno, "duplicate feature index " + std::to_string(row[k].first + 1));
    for (const auto& [j, v] : row) {
      col_idx.push_back(j);
      vals.push_back(v);
    }
    row_ptr.push_back(col_idx.size());
  }
  if (row_ptr.size() == 1) throw argument_error("dataset is empty");
  if (max_idx == 0) throw argument_error("dataset has no features");
  const std::size_t n = row_ptr.size() - 1;
  return make_sparse(n, max_idx, std::move(row_ptr), std::move(col_idx), std::move(vals));
}

inline DataMatrix parse_libsvm_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open '" + path + "'");
  return parse_libsvm(in);
}

// Labels are not part of DataMatrix, so a placeholder 0 is written.
inline void write_libsvm(const DataMatrix& data, std::ostream& out) {
  char buf[40];
  for (std::size_t i = 0; i < data.n; ++i) {
    out << '0';
    if (data.sparse) {
      for (std::size_t k = data.row_ptr[i]; k < data.row_ptr[i + 1]; ++k) {
        std::snprintf(buf, sizeof buf, "%.17g", data.vals[k]);
        out << ' ' << data.col_idx[k] + 1 << ':' << buf;
      }
    } else {
      for (std::size_t j = 0; j < data.d; ++j) {
        const double v = data.dense(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
        if (v == 0.0) continue;
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << ' ' << j + 1 << ':' << buf;
      }
    }
    out << '\n';
  }
}

namespace detail {

inline Mat gaussian_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Mat g(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index j = 0; j < g.cols(); ++j)
    for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, j) = rng.normal();
  return g;
}

// Thin Q factor of a seeded Gaussian draw: a uniformly random frame.
inline Mat random_orthonormal(std::size_t rows, std::size_t cols, Rng& rng) {
  Eigen::HouseholderQR<Mat> qr(gaussian_matrix(rows, cols, rng));
  return qr.householderQ() * Mat::Identity(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

}  // namespace detail

// Dataset whose sample covariance is U diag(spectrum) U^T by construction:
// A = U (n L)^{1/2} V^T with V^T V = I. With rotate = false both frames are
// axis-aligned and the data vectors are the scaled coordinate axes.
inline std::pair<DataMatrix, SpectralReference> synthetic_spectrum(
    const std::vector<double>& spectrum, std::size_t n, std::uint64_t seed, bool rotate = true) {
  const std::size_t d = spectrum.size();
  if (d < 2) throw argument_error("spectrum needs at least two eigenvalues");
  if (n < d) throw argument_error("need n >= d to realize the spectrum exactly");
  for (std::size_t k = 0; k < d; ++k) {
    if (!(spectrum[k] >= 0.0)) throw argument_error("eigenvalues must be nonnegative");
    if (k > 0 && spectrum[k] > spectrum[k - 1]) throw argument_error("spectrum must be nonincreasing");
  }
  Rng rng(seed);
  Mat u, v;
  if (rotate) {
    u = detail::random_orthonormal(d, d, rng);
    v = detail::random_orthonormal(n, d, rng);
  } else {
    u = Mat::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    v = Mat::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  }
  Vec scale(static_cast<Eigen::Index>(d));
  for (std::size_t k = 0; k < d; ++k) scale[static_cast<Eigen::Index>(k)] = std::sqrt(static_cast<double>(n) * spectrum[k]);
  Mat a = u * scale.asDiagonal() * v.transpose();

  SpectralReference ref;
  ref.eigenvalues = spectrum;
  ref.basis = u;
  ref.u1 = u.col(0);
  ref.u2 = u.col(1);
  return {make_dense(std::move(a)), std::move(ref)};
}

namespace detail {

// Power iteration on v -> apply(v), deterministic start, used only to build
// references for problems too large to decompose densely.
template <class Apply>
inline std::pair<double, Vec> dominant_pair(Apply&& apply, std::size_t d, double tol) {
  Rng rng(0x9e3779b97f4a7c15ULL);
  Vec w(static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = rng.normal();
  w = normalize(w);
  double lambda = 0.0;
  for (std::size_t it = 0; it < 1000000; ++it) {
    Vec cw = apply(w);
    lambda = w.dot(cw);
    if ((cw - lambda * w).norm() <= tol) return {lambda, w};
    w = normalize(cw);
  }
  throw numeric_error("reference power iteration did not converge");
}

}  // namespace detail

// Top eigenpairs of the sample covariance. Small problems go through a dense
// symmetric eigendecomposition of the explicit C; larger ones use power
// iteration plus one deflation, run to residual 1e-12.
inline SpectralReference reference_eigenpairs(const DataMatrix& data, std::size_t k = 2) {
  if (data.d < 2) throw argument_error("need d >= 2 for a top-two reference");
  if (k < 1 || k > 2) throw argument_error("k must be 1 or 2");
  SpectralReference ref;
  if (data.d <= 512) {
    const Mat c = explicit_covariance(data);
    Eigen::SelfAdjointEigenSolver<Mat> es(c);
    if (es.info() != Eigen::Success) throw numeric_error("eigendecomposition failed");
    const auto d = static_cast<Eigen::Index>(data.d);
    ref.eigenvalues.resize(data.d);
    ref.basis.resize(d, d);
    for (Eigen::Index j = 0; j < d; ++j) {
      double lam = es.eigenvalues()[d - 1 - j];
      if (lam < 0.0) {
        if (lam < -1e-10) throw numeric_error("covariance has a significantly negative eigenvalue");
        lam = 0.0;
      }
      ref.eigenvalues[static_cast<std::size_t>(j)] = lam;
      ref.basis.col(j) = es.eigenvectors().col(d - 1 - j);
    }
    ref.u1 = ref.basis.col(0);
    ref.u2 = ref.basis.col(1);
  } else {
    auto [l1, v1] = detail::dominant_pair(
        [&](const Vec& v) { return covariance_matvec(data, v); }, data.d, 1e-12);
    ref.eigenvalues.push_back(l1);
    ref.u1 = v1;
    if (k == 2) {
      auto [l2, v2] = detail::dominant_pair(
          [&](const Vec& v) {
            Vec cv = covariance_matvec(data, v);
            return Vec(cv - l1 * v1.dot(v) * v1);
          },
          data.d, 1e-12);
      ref.eigenvalues.push_back(std::max(l2, 0.0));
      ref.u2 = v2;
    } else {
      ref.eigenvalues.push_back(0.0);
    }
  }
  if (ref.eigenvalues[0] - ref.eigenvalues[1] < 1e-10)
    throw numeric_error("degenerate top eigengap: lambda1 - lambda2 < 1e-10");
  return ref;
}

// Per-feature zero mean and unit variance (population variance, divide by n).
// Features with sd below 1e-12 are zeroed. Always returns dense storage.
inline DataMatrix standardize(const DataMatrix& data) {
  if (data.n < 2) throw argument_error("standardize needs n >= 2");
  const auto d = static_cast<Eigen::Index>(data.d);
  const auto n = static_cast<Eigen::Index>(data.n);
  Mat full(d, n);
  if (data.sparse) {
    full.setZero();
    for (std::size_t i = 0; i < data.n; ++i)
      for (std::size_t k = data.row_ptr[i]; k < data.row_ptr[i + 1]; ++k)
        full(static_cast<Eigen::Index>(data.col_idx[k]), static_cast<Eigen::Index>(i)) = data.vals[k];
  } else {
    full = data.dense;
  }
  for (Eigen::Index j = 0; j < d; ++j) {
    const double mean = full.row(j).mean();
    const double var = (full.row(j).array() - mean).square().sum() / static_cast<double>(n);
    const double sd = std::sqrt(var);
    if (sd < 1e-12)
      full.row(j).setZero();
    else
      full.row(j) = (full.row(j).array() - mean) / sd;
  }
  return make_dense(std::move(full));
}

// Per-feature map onto [0, 1] using the min and max of the observed values,
// implicit zeros included. Constant features are zeroed with a warning.
// Sparse storage survives when every feature min is 0 (zero maps to zero).
inline DataMatrix minmax_scale(const DataMatrix& data) {
  if (data.n < 1) throw argument_error("dataset is empty");
  std::vector<double> lo(data.d, std::numeric_limits<double>::infinity());
  std::vector<double> hi(data.d, -std::numeric_limits<double>::infinity());
  if (data.sparse) {
    std::vector<std::size_t> seen(data.d, 0);
    for (std::size_t k = 0; k < data.vals.size(); ++k) {
      const std::size_t j = data.col_idx[k];
      lo[j] = std::min(lo[j], data.vals[k]);
      hi[j] = std::max(hi[j], data.vals[k]);
      ++seen[j];
    }
    for (std::size_t j = 0; j < data.d; ++j) {
      if (seen[j] < data.n) {  // implicit zeros present
        lo[j] = std::min(lo[j], 0.0);
        hi[j] = std::max(hi[j], 0.0);
      }
    }
  } else {
    for (std::size_t j = 0; j < data.d; ++j) {
      lo[j] = data.dense.row(static_cast<Eigen::Index>(j)).minCoeff();
      hi[j] = data.dense.row(static_cast<Eigen::Index>(j)).maxCoeff();
    }
  }
  bool sparse_ok = data.sparse;
  for (std::size_t j = 0; j < data.d; ++j) {
    if (hi[j] == lo[j]) {
      std::cerr << "warning: feature " << j + 1 << " is constant, zeroing it\n";
    } else if (lo[j] != 0.0) {
      sparse_ok = false;  // zero would not map to zero
    }
  }
  if (sparse_ok) {
    DataMatrix out = data;
    for (std::size_t k = 0; k < out.vals.size(); ++k) {
      const std::size_t j = out.col_idx[k];
      out.vals[k] = (hi[j] == lo[j]) ? 0.0 : out.vals[k] / hi[j];
    }
    return out;
  }
  const auto d = static_cast<Eigen::Index>(data.d);
  const auto n = static_cast<Eigen::Index>(data.n);
  Mat full = Mat::Zero(d, n);
  if (data.sparse) {
    for (std::size_t i = 0; i < data.n; ++i)
      for (std::size_t k = data.row_ptr[i]; k < data.row_ptr[i + 1]; ++k)
        full(static_cast<Eigen::Index>(data.col_idx[k]), static_cast<Eigen::Index>(i)) = data.vals[k];
  } else {
    full = data.dense;
  }
  for (Eigen::Index j = 0; j < d; ++j) {
    const std::size_t js = static_cast<std::size_t>(j);
    if (hi[js] == lo[js])
      full.row(j).setZero();
    else
      full.row(j) = (full.row(j).array() - lo[js]) / (hi[js] - lo[js]);
  }
  return make_dense(std::move(full));
}

enum class Preproc { none, standardize, minmax };

// Where a benchmark dataset comes from and how it is prepared.
struct DatasetSpec {
  enum class Source { libsvm, synthetic };
  Source source = Source::synthetic;
  std::string path;              // libsvm source
  std::vector<double> spectrum;  // synthetic source
  std::size_t n = 0;
  std::uint64_t seed = 0;
  bool rotate = true;
  Preproc preproc = Preproc::none;
  std::string name;
};

inline DataMatrix apply_preproc(DataMatrix data, Preproc p) {
  switch (p) {
    case Preproc::standardize: return standardize(data);
    case Preproc::minmax: return minmax_scale(data);
    case Preproc::none: return data;
  }
  throw argument_error("unknown preprocessing mode");
}

// Loads, preprocesses, and attaches a spectral reference. A synthetic
// reference is exact only while untouched, so any preprocessing forces a
// recomputation.
inline std::pair<DataMatrix, SpectralReference> load_dataset(const DatasetSpec& spec) {
  if (spec.source == DatasetSpec::Source::libsvm) {
    DataMatrix data = apply_preproc(parse_libsvm_file(spec.path), spec.preproc);
    SpectralReference ref = reference_eigenpairs(data);
    return {std::move(data), std::move(ref)};
  }
  auto [data, ref] = synthetic_spectrum(spec.spectrum, spec.n, spec.seed, spec.rotate);
  if (spec.preproc != Preproc::none) {
    data = apply_preproc(std::move(data), spec.preproc);
    ref = reference_eigenpairs(data);
  }
  return {std::move(data), std::move(ref)};
}

}  // namespace vrpower
