#include "rfb/kernels.hpp"

#include <cassert>
#include <cmath>
#include <limits>

namespace rfb::kernels::scalar {

namespace {
inline std::size_t pick(const std::uint32_t* idx, std::size_t i) { return idx ? idx[i] : i; }
}  // namespace

void dist_sq(const double* const* dims, int n, const std::uint32_t* idx, std::size_t m,
             const double* center, double* out) {
  assert(n >= 1 && n <= kMaxDim);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t p = pick(idx, i);
    double s = 0.0;
    for (int c = 0; c < n; ++c) {
      const double d = dims[c][p] - center[c];
      s += d * d;
    }
    out[i] = s;
  }
}

void plane_dist_sq(const double* const* dims, int n, const std::uint32_t* idx, std::size_t m,
                   const double* base, const double* frame, int k, double* out) {
  assert(k >= 0 && k < n);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t p = pick(idx, i);
    double diff[kMaxDim];
    double s = 0.0;
    for (int c = 0; c < n; ++c) {
      diff[c] = dims[c][p] - base[c];
      s += diff[c] * diff[c];
    }
    for (int j = 0; j < k; ++j) {
      double t = 0.0;
      const double* fj = frame + static_cast<std::size_t>(j) * n;
      for (int c = 0; c < n; ++c) t += diff[c] * fj[c];
      s -= t * t;
    }
    out[i] = s > 0.0 ? s : 0.0;
  }
}

void weighted_mean(const double* const* dims, const double* w, int n, const std::uint32_t* idx,
                   std::size_t m, double* mean, double* wsum) {
  double acc[kMaxDim] = {0};
  double ws = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t p = pick(idx, i);
    const double wi = w[p];
    ws += wi;
    for (int c = 0; c < n; ++c) acc[c] += wi * dims[c][p];
  }
  *wsum = ws;
  for (int c = 0; c < n; ++c) mean[c] = ws > 0.0 ? acc[c] / ws : 0.0;
}

void weighted_scatter(const double* const* dims, const double* w, int n,
                      const std::uint32_t* idx, std::size_t m, const double* mean,
                      double* upper) {
  const std::size_t t = tri_size(n);
  for (std::size_t e = 0; e < t; ++e) upper[e] = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t p = pick(idx, i);
    const double wi = w[p];
    double diff[kMaxDim];
    for (int c = 0; c < n; ++c) diff[c] = dims[c][p] - mean[c];
    std::size_t e = 0;
    for (int c1 = 0; c1 < n; ++c1)
      for (int c2 = c1; c2 < n; ++c2) upper[e++] += wi * diff[c1] * diff[c2];
  }
}

double weighted_residual(const double* const* dims, const double* w, int n,
                         const std::uint32_t* idx, std::size_t m, const double* base,
                         const double* frame, int k, double q) {
  double acc = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t p = pick(idx, i);
    double diff[kMaxDim];
    double s = 0.0;
    for (int c = 0; c < n; ++c) {
      diff[c] = dims[c][p] - base[c];
      s += diff[c] * diff[c];
    }
    for (int j = 0; j < k; ++j) {
      double t = 0.0;
      const double* fj = frame + static_cast<std::size_t>(j) * n;
      for (int c = 0; c < n; ++c) t += diff[c] * fj[c];
      s -= t * t;
    }
    if (s < 0.0) s = 0.0;
    double dq;
    if (q == 2.0)
      dq = s;
    else if (q == 4.0)
      dq = s * s;
    else
      dq = std::pow(s, 0.5 * q);
    acc += w[p] * dq;
  }
  return acc;
}

void min_dist_sq(const double* const* a_dims, std::size_t na, const double* const* b_dims,
                 std::size_t nb, int n, double* out) {
  for (std::size_t i = 0; i < na; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < nb; ++j) {
      double s = 0.0;
      for (int c = 0; c < n; ++c) {
        const double d = a_dims[c][i] - b_dims[c][j];
        s += d * d;
      }
      if (s < best) best = s;
    }
    out[i] = best;
  }
}

}  // namespace rfb::kernels::scalar
