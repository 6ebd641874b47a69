#pragma once

// Independent reference computations for the tests. Everything here is
// written from the definitions, in double precision, without calling into the
// library code it checks.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <tuple>
#include <vector>

namespace oracle {

/// Y = W · X with W (m x k) and X (k x n), both row-major.
inline std::vector<double> dense_gemm(const std::vector<double>& w, const std::vector<double>& x, std::size_t m,
                                      std::size_t k, std::size_t n) {
  std::vector<double> y(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += w[i * k + p] * x[p * n + j];
      y[i * n + j] = acc;
    }
  return y;
}

/// Direct convolution of a CHW input with (M, N, Kh, Kw) weights.
inline std::vector<double> direct_conv(const std::vector<double>& w, std::size_t m, std::size_t n, std::size_t kh,
                                       std::size_t kw, const std::vector<double>& x, std::size_t h, std::size_t wd,
                                       std::size_t stride, std::size_t pad, std::size_t* out_h = nullptr,
                                       std::size_t* out_w = nullptr) {
  const std::size_t ho = (h + 2 * pad - kh) / stride + 1;
  const std::size_t wo = (wd + 2 * pad - kw) / stride + 1;
  if (out_h) *out_h = ho;
  if (out_w) *out_w = wo;
  std::vector<double> y(m * ho * wo, 0.0);
  for (std::size_t f = 0; f < m; ++f)
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox) {
        double acc = 0.0;
        for (std::size_t c = 0; c < n; ++c)
          for (std::size_t i = 0; i < kh; ++i)
            for (std::size_t j = 0; j < kw; ++j) {
              const long iy = static_cast<long>(oy * stride + i) - static_cast<long>(pad);
              const long ix = static_cast<long>(ox * stride + j) - static_cast<long>(pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd)) continue;
              acc += w[((f * n + c) * kh + i) * kw + j] *
                     x[(c * h + static_cast<std::size_t>(iy)) * wd + static_cast<std::size_t>(ix)];
            }
        y[(f * ho + oy) * wo + ox] = acc;
      }
  return y;
}

/// ||a - b|| / ||b||.
inline double rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return std::sqrt(num / den);
}

struct Csr {
  std::vector<std::uint32_t> row_ptr;
  std::vector<std::uint32_t> col_idx;
  std::vector<double> values;

  std::size_t index_bytes() const { return 4 * (row_ptr.size() + col_idx.size()); }
};

inline Csr csr_encode(const std::vector<double>& dense, std::size_t rows, std::size_t cols) {
  Csr c;
  c.row_ptr.push_back(0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = 0; k < cols; ++k)
      if (dense[r * cols + k] != 0.0) {
        c.col_idx.push_back(static_cast<std::uint32_t>(k));
        c.values.push_back(dense[r * cols + k]);
      }
    c.row_ptr.push_back(static_cast<std::uint32_t>(c.col_idx.size()));
  }
  return c;
}

/// Solves total / (w3 / (rho·r1) + wo / r1) = rate for r1 by bisection.
inline double solve_rate_other(double w3, double wo, double rate, double rho) {
  const auto achieved = [&](double r1) { return (w3 + wo) / (w3 / (rho * r1) + wo / r1); };
  double lo = 1e-9, hi = 1e9;
  for (int i = 0; i < 400; ++i) {
    const double mid = std::sqrt(lo * hi);
    (achieved(mid) < rate ? lo : hi) = mid;
  }
  return std::sqrt(lo * hi);
}

/// Groups (band, column) ranked by norm descending, ties to the lower column
/// then the lower band; returns the first k as (band, column) pairs.
inline std::vector<std::pair<std::size_t, std::size_t>> top_k_groups(const std::vector<double>& norms,
                                                                     std::size_t bands, std::size_t cols,
                                                                     std::size_t k) {
  std::vector<std::tuple<double, std::size_t, std::size_t>> all;
  for (std::size_t b = 0; b < bands; ++b)
    for (std::size_t c = 0; c < cols; ++c) all.emplace_back(norms[b * cols + c], c, b);
  std::sort(all.begin(), all.end(), [](const auto& x, const auto& y) {
    if (std::get<0>(x) != std::get<0>(y)) return std::get<0>(x) > std::get<0>(y);
    if (std::get<1>(x) != std::get<1>(y)) return std::get<1>(x) < std::get<1>(y);
    return std::get<2>(x) < std::get<2>(y);
  });
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < k; ++i) out.emplace_back(std::get<2>(all[i]), std::get<1>(all[i]));
  std::sort(out.begin(), out.end());
  return out;
}

/// Minimum over all 2^k assignments of max(Σ_C t_c, Σ_G t_g); sums run in
/// ascending branch order. Bit i of the returned mask set = branch i on G.
struct Enumerated {
  double makespan = 0.0;
  std::vector<std::uint32_t> optimal;  // every assignment reaching the minimum
};

inline Enumerated enumerate_assignments(const std::vector<double>& t_g, const std::vector<double>& t_c) {
  const std::size_t k = t_g.size();
  Enumerated e;
  e.makespan = std::numeric_limits<double>::infinity();
  for (std::uint32_t a = 0; a < (1u << k); ++a) {
    double sg = 0.0, sc = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      if (a >> i & 1u) sg += t_g[i];
      else sc += t_c[i];
    }
    const double t = std::max(sg, sc);
    if (t < e.makespan) {
      e.makespan = t;
      e.optimal.clear();
    }
    if (t == e.makespan) e.optimal.push_back(a);
  }
  return e;
}

/// Central differences of f at x, one coordinate at a time.
inline std::vector<double> central_differences(const std::function<double(const std::vector<double>&)>& f,
                                               std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Spearman rank correlation (average ranks on ties).
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      for (std::size_t q = i; q <= j; ++q) r[idx[q]] = 0.5 * static_cast<double>(i + j) + 1.0;
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace oracle
