// SPDX-License-Identifier: Apache-2.0
//
// Dense double-precision kernels used by the gradient engine, the embedding
// trainer and the model forward/backward passes. Every kernel exists twice:
// a scalar reference implementation (kern::scalar) and, on x86-64 with
// AVX2+FMA, a vectorized variant. The public entry points dispatch at
// runtime; set_force_scalar(true) pins them to the reference path.

#pragma once

#include <cstddef>

namespace xattn::kern {

// Dispatch control. Scalar forcing is global and intended for tests.
void set_force_scalar(bool v);
bool simd_available();
// "avx2" or "scalar", reflecting what dispatched calls currently run.
const char* active_isa();

// y[i] stride-1 vectors throughout; gemm is row-major with explicit leading
// dimensions (row strides).

double dot(const double* a, const double* b, std::size_t n);
double sum(const double* x, std::size_t n);
double sumsq(const double* x, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scal(double alpha, double* x, std::size_t n);
void vadd(const double* a, const double* b, double* out, std::size_t n);
void vsub(const double* a, const double* b, double* out, std::size_t n);
void vmul(const double* a, const double* b, double* out, std::size_t n);

// C(m x n) = alpha * op(A) * op(B) + beta * C
// op(A) is m x k: stored A is m x k when !ta, k x m when ta (lda = row stride
// of the stored matrix). Same convention for B.
void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
          double alpha, const double* A, std::size_t lda, const double* B,
          std::size_t ldb, double beta, double* C, std::size_t ldc);

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
double sum(const double* x, std::size_t n);
double sumsq(const double* x, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scal(double alpha, double* x, std::size_t n);
void vadd(const double* a, const double* b, double* out, std::size_t n);
void vsub(const double* a, const double* b, double* out, std::size_t n);
void vmul(const double* a, const double* b, double* out, std::size_t n);
void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
          double alpha, const double* A, std::size_t lda, const double* B,
          std::size_t ldb, double beta, double* C, std::size_t ldc);
}  // namespace scalar

namespace avx2 {
// Defined only when the build target supports per-function AVX2 codegen;
// callers must check simd_available() first.
double dot(const double* a, const double* b, std::size_t n);
double sum(const double* x, std::size_t n);
double sumsq(const double* x, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scal(double alpha, double* x, std::size_t n);
void vadd(const double* a, const double* b, double* out, std::size_t n);
void vsub(const double* a, const double* b, double* out, std::size_t n);
void vmul(const double* a, const double* b, double* out, std::size_t n);
void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
          double alpha, const double* A, std::size_t lda, const double* B,
          std::size_t ldb, double beta, double* C, std::size_t ldc);
}  // namespace avx2

}  // namespace xattn::kern
