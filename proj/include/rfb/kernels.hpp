#pragma once

#include <cstddef>
#include <cstdint>

// Batch kernels over structure-of-arrays point data: dims[c][i] is coordinate
// c of point i. Every kernel exists as a scalar reference implementation and,
// on x86-64, an AVX2+FMA variant; the dispatched entry points pick a backend
// once at startup (override with REIFENBERG_KERNEL=scalar|avx2|auto).
//
// An index list selects the points to visit; passing idx == nullptr means
// the identity selection [0, m), which the SIMD variants serve with
// contiguous loads instead of gathers.
//
// Per-point outputs (dist_sq, plane_dist_sq, min_dist_sq) agree between
// backends up to FMA rounding. Accumulating kernels (weighted_mean,
// weighted_scatter, weighted_residual) additionally reassociate the sum, so
// equivalence is tested against a long-double oracle rather than bitwise.

namespace rfb::kernels {

inline constexpr int kMaxDim = 8;

enum class Backend { scalar, avx2 };

Backend active_backend();
const char* backend_name(Backend b);
bool backend_available(Backend b);
// Test hook; not safe while kernels run on other threads.
void force_backend(Backend b);

// Packed upper-triangle index for an n x n symmetric matrix, c1 <= c2.
inline std::size_t tri_index(int n, int c1, int c2) {
  return static_cast<std::size_t>(c1) * n - static_cast<std::size_t>(c1) * (c1 - 1) / 2 +
         static_cast<std::size_t>(c2 - c1);
}
inline std::size_t tri_size(int n) { return static_cast<std::size_t>(n) * (n + 1) / 2; }

#define RFB_KERNEL_SIGNATURES                                                             \
  void dist_sq(const double* const* dims, int n, const std::uint32_t* idx, std::size_t m, \
               const double* center, double* out);                                        \
  void plane_dist_sq(const double* const* dims, int n, const std::uint32_t* idx,          \
                     std::size_t m, const double* base, const double* frame, int k,       \
                     double* out);                                                        \
  void weighted_mean(const double* const* dims, const double* w, int n,                   \
                     const std::uint32_t* idx, std::size_t m, double* mean,               \
                     double* wsum);                                                       \
  void weighted_scatter(const double* const* dims, const double* w, int n,                \
                        const std::uint32_t* idx, std::size_t m, const double* mean,      \
                        double* upper);                                                   \
  double weighted_residual(const double* const* dims, const double* w, int n,             \
                           const std::uint32_t* idx, std::size_t m, const double* base,   \
                           const double* frame, int k, double q);                         \
  void min_dist_sq(const double* const* a_dims, std::size_t na,                           \
                   const double* const* b_dims, std::size_t nb, int n, double* out)

namespace scalar {
RFB_KERNEL_SIGNATURES;
}
namespace avx2 {
RFB_KERNEL_SIGNATURES;
}

// Dispatched entry points.
RFB_KERNEL_SIGNATURES;

#undef RFB_KERNEL_SIGNATURES

}  // namespace rfb::kernels
