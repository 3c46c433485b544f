// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"
#include "xattn/kernels.hpp"
#include "xattn/rng.hpp"

#include <cmath>
#include <string>
#include <vector>

using namespace xattn;

namespace {

std::vector<double> rand_vec(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-2.0, 2.0);
  return v;
}

// Equality bound for two summation orders of n products of O(1) values.
double tol(std::size_t n) { return 1e-12 * double(n + 1); }

}  // namespace

TEST_CASE("vector kernels: simd matches scalar on many shapes") {
  if (!kern::simd_available()) return;  // host without AVX2: dispatch is scalar anyway
  Rng rng(11);
  for (std::size_t n : {std::size_t{1}, std::size_t{2}, std::size_t{3}, std::size_t{4},
                        std::size_t{5}, std::size_t{7}, std::size_t{8}, std::size_t{15},
                        std::size_t{16}, std::size_t{17}, std::size_t{63}, std::size_t{64},
                        std::size_t{100}, std::size_t{1023}}) {
    const std::vector<double> a = rand_vec(rng, n), b = rand_vec(rng, n);

    CHECK(std::abs(kern::avx2::dot(a.data(), b.data(), n) -
                   kern::scalar::dot(a.data(), b.data(), n)) <= tol(n));
    CHECK(std::abs(kern::avx2::sum(a.data(), n) - kern::scalar::sum(a.data(), n)) <= tol(n));
    CHECK(std::abs(kern::avx2::sumsq(a.data(), n) - kern::scalar::sumsq(a.data(), n)) <=
          tol(n));

    std::vector<double> y1 = b, y2 = b;
    kern::scalar::axpy(0.731, a.data(), y1.data(), n);
    kern::avx2::axpy(0.731, a.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(y1[i] - y2[i]) <= 1e-14);

    y1 = a;
    y2 = a;
    kern::scalar::scal(-1.25, y1.data(), n);
    kern::avx2::scal(-1.25, y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(y1[i] == y2[i]);

    std::vector<double> o1(n), o2(n);
    kern::scalar::vadd(a.data(), b.data(), o1.data(), n);
    kern::avx2::vadd(a.data(), b.data(), o2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(o1[i] == o2[i]);
    kern::scalar::vsub(a.data(), b.data(), o1.data(), n);
    kern::avx2::vsub(a.data(), b.data(), o2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(o1[i] == o2[i]);
    kern::scalar::vmul(a.data(), b.data(), o1.data(), n);
    kern::avx2::vmul(a.data(), b.data(), o2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(o1[i] == o2[i]);
  }
}

TEST_CASE("gemm: simd matches scalar over transposes, shapes, alpha/beta") {
  if (!kern::simd_available()) return;
  Rng rng(12);
  const std::size_t shapes[][3] = {{1, 1, 1},  {2, 3, 4},   {5, 5, 5},   {8, 8, 8},
                                   {4, 16, 8}, {16, 4, 32}, {17, 9, 13}, {33, 29, 31},
                                   {1, 64, 7}, {64, 1, 7},  {40, 40, 3}};
  for (const auto& s : shapes) {
    const std::size_t m = s[0], n = s[1], k = s[2];
    for (int ta = 0; ta < 2; ++ta)
      for (int tb = 0; tb < 2; ++tb)
        for (double beta : {0.0, 1.0, -0.5}) {
          const std::size_t lda = ta ? m : k, ldb = tb ? k : n;
          const std::vector<double> A = rand_vec(rng, (ta ? k : m) * lda);
          const std::vector<double> B = rand_vec(rng, (tb ? n : k) * ldb);
          std::vector<double> C0 = rand_vec(rng, m * n);
          std::vector<double> C1 = C0, C2 = C0;
          kern::scalar::gemm(ta, tb, m, n, k, 1.3, A.data(), lda, B.data(), ldb, beta,
                             C1.data(), n);
          kern::avx2::gemm(ta, tb, m, n, k, 1.3, A.data(), lda, B.data(), ldb, beta, C2.data(),
                           n);
          for (std::size_t i = 0; i < m * n; ++i) CHECK(std::abs(C1[i] - C2[i]) <= tol(k));
        }
  }
}

TEST_CASE("gemm: scalar reference against a hand fixture") {
  // [1 2; 3 4] * [5 6; 7 8] = [19 22; 43 50]
  const double A[] = {1, 2, 3, 4}, B[] = {5, 6, 7, 8};
  double C[4] = {0, 0, 0, 0};
  kern::scalar::gemm(false, false, 2, 2, 2, 1.0, A, 2, B, 2, 0.0, C, 2);
  CHECK(C[0] == 19);
  CHECK(C[1] == 22);
  CHECK(C[2] == 43);
  CHECK(C[3] == 50);

  // With ta: op(A) = A^T where stored A is k x m.
  double Ct[4] = {0, 0, 0, 0};
  kern::scalar::gemm(true, false, 2, 2, 2, 1.0, A, 2, B, 2, 0.0, Ct, 2);
  // A^T = [1 3; 2 4] -> A^T B = [26 30; 38 44]
  CHECK(Ct[0] == 26);
  CHECK(Ct[1] == 30);
  CHECK(Ct[2] == 38);
  CHECK(Ct[3] == 44);
}

TEST_CASE("force_scalar pins dispatch to the reference path") {
  const bool simd = kern::simd_available();
  CHECK(std::string(kern::active_isa()) == (simd ? "avx2" : "scalar"));
  kern::set_force_scalar(true);
  CHECK(std::string(kern::active_isa()) == "scalar");

  Rng rng(13);
  const std::vector<double> a = rand_vec(rng, 37), b = rand_vec(rng, 37);
  const double forced = kern::dot(a.data(), b.data(), 37);
  CHECK(forced == kern::scalar::dot(a.data(), b.data(), 37));

  kern::set_force_scalar(false);
  CHECK(std::string(kern::active_isa()) == (simd ? "avx2" : "scalar"));
}
