#include "rfb/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <stdexcept>

namespace rfb::kernels {

namespace {

bool avx2_supported() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend choose_backend() {
  if (const char* env = std::getenv("REIFENBERG_KERNEL")) {
    if (std::strcmp(env, "scalar") == 0) return Backend::scalar;
    if (std::strcmp(env, "avx2") == 0 && avx2_supported()) return Backend::avx2;
    // anything else (including "auto") falls through to detection
  }
  return avx2_supported() ? Backend::avx2 : Backend::scalar;
}

Backend& backend_slot() {
  static Backend b = choose_backend();
  return b;
}

}  // namespace

Backend active_backend() { return backend_slot(); }

const char* backend_name(Backend b) { return b == Backend::avx2 ? "avx2" : "scalar"; }

bool backend_available(Backend b) { return b == Backend::scalar || avx2_supported(); }

void force_backend(Backend b) {
  if (!backend_available(b)) throw std::runtime_error("kernel backend not available on this host");
  backend_slot() = b;
}

void dist_sq(const double* const* dims, int n, const std::uint32_t* idx, std::size_t m,
             const double* center, double* out) {
  if (active_backend() == Backend::avx2)
    avx2::dist_sq(dims, n, idx, m, center, out);
  else
    scalar::dist_sq(dims, n, idx, m, center, out);
}

void plane_dist_sq(const double* const* dims, int n, const std::uint32_t* idx, std::size_t m,
                   const double* base, const double* frame, int k, double* out) {
  if (active_backend() == Backend::avx2)
    avx2::plane_dist_sq(dims, n, idx, m, base, frame, k, out);
  else
    scalar::plane_dist_sq(dims, n, idx, m, base, frame, k, out);
}

void weighted_mean(const double* const* dims, const double* w, int n, const std::uint32_t* idx,
                   std::size_t m, double* mean, double* wsum) {
  if (active_backend() == Backend::avx2)
    avx2::weighted_mean(dims, w, n, idx, m, mean, wsum);
  else
    scalar::weighted_mean(dims, w, n, idx, m, mean, wsum);
}

void weighted_scatter(const double* const* dims, const double* w, int n, const std::uint32_t* idx,
                      std::size_t m, const double* mean, double* upper) {
  if (active_backend() == Backend::avx2)
    avx2::weighted_scatter(dims, w, n, idx, m, mean, upper);
  else
    scalar::weighted_scatter(dims, w, n, idx, m, mean, upper);
}

double weighted_residual(const double* const* dims, const double* w, int n,
                         const std::uint32_t* idx, std::size_t m, const double* base,
                         const double* frame, int k, double q) {
  if (active_backend() == Backend::avx2)
    return avx2::weighted_residual(dims, w, n, idx, m, base, frame, k, q);
  return scalar::weighted_residual(dims, w, n, idx, m, base, frame, k, q);
}

void min_dist_sq(const double* const* a_dims, std::size_t na, const double* const* b_dims,
                 std::size_t nb, int n, double* out) {
  if (active_backend() == Backend::avx2)
    avx2::min_dist_sq(a_dims, na, b_dims, nb, n, out);
  else
    scalar::min_dist_sq(a_dims, na, b_dims, nb, n, out);
}

}  // namespace rfb::kernels
