// AVX2+FMA kernel variants. This translation unit is compiled with
// -mavx2 -mfma; callers must check backend_available(Backend::avx2) first.
// Each kernel is instantiated twice: gathered (explicit index list) and
// contiguous (idx == nullptr).

#include "rfb/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cassert>
#include <cmath>
#include <limits>

namespace rfb::kernels::avx2 {

namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s2 = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s2, _mm_unpackhi_pd(s2, s2)));
}

inline double hmin(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d m2 = _mm_min_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_min_sd(m2, _mm_unpackhi_pd(m2, m2)));
}

template <bool kGather>
inline __m256d load4(const double* src, const std::uint32_t* idx, std::size_t i) {
  if constexpr (kGather) {
    const __m128i vi = _mm_loadu_si128(reinterpret_cast<const __m128i*>(idx + i));
    return _mm256_i32gather_pd(src, vi, 8);
  } else {
    return _mm256_loadu_pd(src + i);
  }
}

template <bool kGather>
void dist_sq_impl(const double* const* dims, int n, const std::uint32_t* idx, std::size_t m,
                  const double* center, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    __m256d s = _mm256_setzero_pd();
    for (int c = 0; c < n; ++c) {
      const __m256d d = _mm256_sub_pd(load4<kGather>(dims[c], idx, i), _mm256_set1_pd(center[c]));
      s = _mm256_fmadd_pd(d, d, s);
    }
    _mm256_storeu_pd(out + i, s);
  }
  if (i < m) scalar::dist_sq(dims, n, kGather ? idx + i : nullptr, m - i, center, out + i);
}

template <bool kGather>
void plane_dist_sq_impl(const double* const* dims, int n, const std::uint32_t* idx, std::size_t m,
                        const double* base, const double* frame, int k, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    __m256d diff[kMaxDim];
    __m256d s = _mm256_setzero_pd();
    for (int c = 0; c < n; ++c) {
      diff[c] = _mm256_sub_pd(load4<kGather>(dims[c], idx, i), _mm256_set1_pd(base[c]));
      s = _mm256_fmadd_pd(diff[c], diff[c], s);
    }
    for (int j = 0; j < k; ++j) {
      const double* fj = frame + static_cast<std::size_t>(j) * n;
      __m256d t = _mm256_setzero_pd();
      for (int c = 0; c < n; ++c) t = _mm256_fmadd_pd(diff[c], _mm256_set1_pd(fj[c]), t);
      s = _mm256_fnmadd_pd(t, t, s);
    }
    _mm256_storeu_pd(out + i, _mm256_max_pd(s, _mm256_setzero_pd()));
  }
  if (i < m)
    scalar::plane_dist_sq(dims, n, kGather ? idx + i : nullptr, m - i, base, frame, k, out + i);
}

template <bool kGather>
void weighted_mean_impl(const double* const* dims, const double* w, int n,
                        const std::uint32_t* idx, std::size_t m, double* mean, double* wsum) {
  __m256d acc[kMaxDim];
  for (int c = 0; c < n; ++c) acc[c] = _mm256_setzero_pd();
  __m256d wacc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    const __m256d wv = load4<kGather>(w, idx, i);
    wacc = _mm256_add_pd(wacc, wv);
    for (int c = 0; c < n; ++c)
      acc[c] = _mm256_fmadd_pd(wv, load4<kGather>(dims[c], idx, i), acc[c]);
  }
  double ws = hsum(wacc);
  double num[kMaxDim];
  for (int c = 0; c < n; ++c) num[c] = hsum(acc[c]);
  for (; i < m; ++i) {
    const std::size_t p = kGather ? idx[i] : i;
    const double wi = w[p];
    ws += wi;
    for (int c = 0; c < n; ++c) num[c] += wi * dims[c][p];
  }
  *wsum = ws;
  for (int c = 0; c < n; ++c) mean[c] = ws > 0.0 ? num[c] / ws : 0.0;
}

template <bool kGather>
void weighted_scatter_impl(const double* const* dims, const double* w, int n,
                           const std::uint32_t* idx, std::size_t m, const double* mean,
                           double* upper) {
  const std::size_t tsz = tri_size(n);
  __m256d acc[kMaxDim * (kMaxDim + 1) / 2];
  for (std::size_t e = 0; e < tsz; ++e) acc[e] = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    const __m256d wv = load4<kGather>(w, idx, i);
    __m256d diff[kMaxDim];
    for (int c = 0; c < n; ++c)
      diff[c] = _mm256_sub_pd(load4<kGather>(dims[c], idx, i), _mm256_set1_pd(mean[c]));
    std::size_t e = 0;
    for (int c1 = 0; c1 < n; ++c1) {
      const __m256d wd = _mm256_mul_pd(wv, diff[c1]);
      for (int c2 = c1; c2 < n; ++c2) {
        acc[e] = _mm256_fmadd_pd(wd, diff[c2], acc[e]);
        ++e;
      }
    }
  }
  for (std::size_t e = 0; e < tsz; ++e) upper[e] = hsum(acc[e]);
  for (; i < m; ++i) {
    const std::size_t p = kGather ? idx[i] : i;
    const double wi = w[p];
    double diff[kMaxDim];
    for (int c = 0; c < n; ++c) diff[c] = dims[c][p] - mean[c];
    std::size_t e = 0;
    for (int c1 = 0; c1 < n; ++c1)
      for (int c2 = c1; c2 < n; ++c2) upper[e++] += wi * diff[c1] * diff[c2];
  }
}

template <bool kGather>
double weighted_residual_impl(const double* const* dims, const double* w, int n,
                              const std::uint32_t* idx, std::size_t m, const double* base,
                              const double* frame, int k, double q) {
  const bool q2 = (q == 2.0), q4 = (q == 4.0);
  __m256d acc = _mm256_setzero_pd();
  double tail = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    __m256d diff[kMaxDim];
    __m256d s = _mm256_setzero_pd();
    for (int c = 0; c < n; ++c) {
      diff[c] = _mm256_sub_pd(load4<kGather>(dims[c], idx, i), _mm256_set1_pd(base[c]));
      s = _mm256_fmadd_pd(diff[c], diff[c], s);
    }
    for (int j = 0; j < k; ++j) {
      const double* fj = frame + static_cast<std::size_t>(j) * n;
      __m256d t = _mm256_setzero_pd();
      for (int c = 0; c < n; ++c) t = _mm256_fmadd_pd(diff[c], _mm256_set1_pd(fj[c]), t);
      s = _mm256_fnmadd_pd(t, t, s);
    }
    s = _mm256_max_pd(s, _mm256_setzero_pd());
    const __m256d wv = load4<kGather>(w, idx, i);
    if (q2) {
      acc = _mm256_fmadd_pd(wv, s, acc);
    } else if (q4) {
      acc = _mm256_fmadd_pd(wv, _mm256_mul_pd(s, s), acc);
    } else {
      alignas(32) double d2[4];
      _mm256_store_pd(d2, s);
      alignas(32) double wl[4];
      _mm256_store_pd(wl, wv);
      for (int l = 0; l < 4; ++l) tail += wl[l] * std::pow(d2[l], 0.5 * q);
    }
  }
  double total = hsum(acc) + tail;
  if (i < m)
    total += scalar::weighted_residual(dims, w, n, kGather ? idx + i : nullptr, m - i, base,
                                       frame, k, q);
  return total;
}

}  // namespace

void dist_sq(const double* const* dims, int n, const std::uint32_t* idx, std::size_t m,
             const double* center, double* out) {
  assert(n >= 1 && n <= kMaxDim);
  if (idx)
    dist_sq_impl<true>(dims, n, idx, m, center, out);
  else
    dist_sq_impl<false>(dims, n, nullptr, m, center, out);
}

void plane_dist_sq(const double* const* dims, int n, const std::uint32_t* idx, std::size_t m,
                   const double* base, const double* frame, int k, double* out) {
  assert(k >= 0 && k < n);
  if (idx)
    plane_dist_sq_impl<true>(dims, n, idx, m, base, frame, k, out);
  else
    plane_dist_sq_impl<false>(dims, n, nullptr, m, base, frame, k, out);
}

void weighted_mean(const double* const* dims, const double* w, int n, const std::uint32_t* idx,
                   std::size_t m, double* mean, double* wsum) {
  if (idx)
    weighted_mean_impl<true>(dims, w, n, idx, m, mean, wsum);
  else
    weighted_mean_impl<false>(dims, w, n, nullptr, m, mean, wsum);
}

void weighted_scatter(const double* const* dims, const double* w, int n, const std::uint32_t* idx,
                      std::size_t m, const double* mean, double* upper) {
  if (idx)
    weighted_scatter_impl<true>(dims, w, n, idx, m, mean, upper);
  else
    weighted_scatter_impl<false>(dims, w, n, nullptr, m, mean, upper);
}

double weighted_residual(const double* const* dims, const double* w, int n,
                         const std::uint32_t* idx, std::size_t m, const double* base,
                         const double* frame, int k, double q) {
  if (idx) return weighted_residual_impl<true>(dims, w, n, idx, m, base, frame, k, q);
  return weighted_residual_impl<false>(dims, w, n, nullptr, m, base, frame, k, q);
}

void min_dist_sq(const double* const* a_dims, std::size_t na, const double* const* b_dims,
                 std::size_t nb, int n, double* out) {
  for (std::size_t i = 0; i < na; ++i) {
    __m256d best = _mm256_set1_pd(std::numeric_limits<double>::infinity());
    __m256d ac[kMaxDim];
    for (int c = 0; c < n; ++c) ac[c] = _mm256_set1_pd(a_dims[c][i]);
    std::size_t j = 0;
    for (; j + 4 <= nb; j += 4) {
      __m256d s = _mm256_setzero_pd();
      for (int c = 0; c < n; ++c) {
        const __m256d d = _mm256_sub_pd(ac[c], _mm256_loadu_pd(b_dims[c] + j));
        s = _mm256_fmadd_pd(d, d, s);
      }
      best = _mm256_min_pd(best, s);
    }
    double m = hmin(best);
    for (; j < nb; ++j) {
      double s = 0.0;
      for (int c = 0; c < n; ++c) {
        const double d = a_dims[c][i] - b_dims[c][j];
        s += d * d;
      }
      if (s < m) m = s;
    }
    out[i] = m;
  }
}

}  // namespace rfb::kernels::avx2

#else  // non-x86 build: route to the scalar reference

namespace rfb::kernels::avx2 {

void dist_sq(const double* const* dims, int n, const std::uint32_t* idx, std::size_t m,
             const double* center, double* out) {
  scalar::dist_sq(dims, n, idx, m, center, out);
}
void plane_dist_sq(const double* const* dims, int n, const std::uint32_t* idx, std::size_t m,
                   const double* base, const double* frame, int k, double* out) {
  scalar::plane_dist_sq(dims, n, idx, m, base, frame, k, out);
}
void weighted_mean(const double* const* dims, const double* w, int n, const std::uint32_t* idx,
                   std::size_t m, double* mean, double* wsum) {
  scalar::weighted_mean(dims, w, n, idx, m, mean, wsum);
}
void weighted_scatter(const double* const* dims, const double* w, int n,
                      const std::uint32_t* idx, std::size_t m, const double* mean,
                      double* upper) {
  scalar::weighted_scatter(dims, w, n, idx, m, mean, upper);
}
double weighted_residual(const double* const* dims, const double* w, int n,
                         const std::uint32_t* idx, std::size_t m, const double* base,
                         const double* frame, int k, double q) {
  return scalar::weighted_residual(dims, w, n, idx, m, base, frame, k, q);
}
void min_dist_sq(const double* const* a_dims, std::size_t na, const double* const* b_dims,
                 std::size_t nb, int n, double* out) {
  scalar::min_dist_sq(a_dims, na, b_dims, nb, n, out);
}

}  // namespace rfb::kernels::avx2

#endif
