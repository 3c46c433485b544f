// SPDX-License-Identifier: Apache-2.0

#include "xattn/kernels.hpp"

#include <atomic>

namespace xattn::kern {

namespace {
std::atomic<bool> g_force_scalar{false};

bool detect_simd() {
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}
}  // namespace

void set_force_scalar(bool v) { g_force_scalar.store(v, std::memory_order_relaxed); }

bool simd_available() {
  static const bool ok = detect_simd();
  return ok;
}

static inline bool use_simd() {
  return simd_available() && !g_force_scalar.load(std::memory_order_relaxed);
}

const char* active_isa() { return use_simd() ? "avx2" : "scalar"; }

namespace scalar {

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double sum(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i];
  return s;
}

double sumsq(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * x[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scal(double alpha, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

void vadd(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void vsub(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void vmul(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
          double alpha, const double* A, std::size_t lda, const double* B,
          std::size_t ldb, double beta, double* C, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    double* c = C + i * ldc;
    if (beta == 0.0) {
      for (std::size_t j = 0; j < n; ++j) c[j] = 0.0;
    } else if (beta != 1.0) {
      for (std::size_t j = 0; j < n; ++j) c[j] *= beta;
    }
  }
  if (!ta && !tb) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t l = 0; l < k; ++l) {
        const double t = alpha * A[i * lda + l];
        const double* b = B + l * ldb;
        double* c = C + i * ldc;
        for (std::size_t j = 0; j < n; ++j) c[j] += t * b[j];
      }
    }
  } else if (!ta && tb) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        C[i * ldc + j] += alpha * dot(A + i * lda, B + j * ldb, k);
      }
    }
  } else if (ta && !tb) {
    for (std::size_t l = 0; l < k; ++l) {
      const double* a = A + l * lda;
      const double* b = B + l * ldb;
      for (std::size_t i = 0; i < m; ++i) {
        const double t = alpha * a[i];
        double* c = C + i * ldc;
        for (std::size_t j = 0; j < n; ++j) c[j] += t * b[j];
      }
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t l = 0; l < k; ++l) s += A[l * lda + i] * B[j * ldb + l];
        C[i * ldc + j] += alpha * s;
      }
    }
  }
}

}  // namespace scalar

double dot(const double* a, const double* b, std::size_t n) {
  return use_simd() ? avx2::dot(a, b, n) : scalar::dot(a, b, n);
}

double sum(const double* x, std::size_t n) {
  return use_simd() ? avx2::sum(x, n) : scalar::sum(x, n);
}

double sumsq(const double* x, std::size_t n) {
  return use_simd() ? avx2::sumsq(x, n) : scalar::sumsq(x, n);
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  use_simd() ? avx2::axpy(alpha, x, y, n) : scalar::axpy(alpha, x, y, n);
}

void scal(double alpha, double* x, std::size_t n) {
  use_simd() ? avx2::scal(alpha, x, n) : scalar::scal(alpha, x, n);
}

void vadd(const double* a, const double* b, double* out, std::size_t n) {
  use_simd() ? avx2::vadd(a, b, out, n) : scalar::vadd(a, b, out, n);
}

void vsub(const double* a, const double* b, double* out, std::size_t n) {
  use_simd() ? avx2::vsub(a, b, out, n) : scalar::vsub(a, b, out, n);
}

void vmul(const double* a, const double* b, double* out, std::size_t n) {
  use_simd() ? avx2::vmul(a, b, out, n) : scalar::vmul(a, b, out, n);
}

void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
          double alpha, const double* A, std::size_t lda, const double* B,
          std::size_t ldb, double beta, double* C, std::size_t ldc) {
  use_simd() ? avx2::gemm(ta, tb, m, n, k, alpha, A, lda, B, ldb, beta, C, ldc)
             : scalar::gemm(ta, tb, m, n, k, alpha, A, lda, B, ldb, beta, C, ldc);
}

}  // namespace xattn::kern
