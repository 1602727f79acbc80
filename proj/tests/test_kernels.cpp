#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"

#include "blockrec/kernels.hpp"
#include "blockrec/rng.hpp"

using namespace blockrec;

// The OpenMP kernels must be bit-identical to the serial references:
// parallelism is over independent output slots only.

TEST_CASE("parallel matmul is bit-identical to the serial reference") {
  Rng rng(5);
  const std::size_t m = 37, k = 29, n = 41;
  std::vector<double> a(m * k), b(k * n), c1(m * n), c2(m * n);
  for (auto& x : a) x = rng.normal();
  for (auto& x : b) x = rng.normal();
  kernels::matmul_serial(a.data(), b.data(), c1.data(), m, k, n);
  kernels::matmul_parallel(a.data(), b.data(), c2.data(), m, k, n);
  CHECK(c1 == c2);
}

TEST_CASE("parallel gmm e-step is bit-identical to the serial reference") {
  Rng rng(17);
  const std::size_t n = 200, dim = 8, k = 3;
  std::vector<double> pts(n * dim), means(k * dim), vars(k * dim), logw(k);
  for (auto& x : pts) x = rng.normal();
  for (auto& x : means) x = rng.normal();
  for (auto& x : vars) x = 0.5 + rng.uniform();
  for (auto& x : logw) x = std::log(1.0 / k);
  std::vector<double> r1(n * k), r2(n * k), ll1(n), ll2(n);
  kernels::gmm_estep_serial(pts.data(), n, dim, means.data(), vars.data(), logw.data(), k,
                            r1.data(), ll1.data());
  kernels::gmm_estep_parallel(pts.data(), n, dim, means.data(), vars.data(), logw.data(), k,
                              r2.data(), ll2.data());
  CHECK(r1 == r2);
  CHECK(ll1 == ll2);

  // Responsibilities normalize per point.
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(r1[i * k + j]);
    CHECK(std::abs(s - 1.0) <= 1e-9);
  }
}

TEST_CASE("parallel cosine matrix is bit-identical and handles zero rows") {
  Rng rng(23);
  const std::size_t n = 50, dim = 6;
  std::vector<double> rows(n * dim);
  for (auto& x : rows) x = rng.normal();
  for (std::size_t d = 0; d < dim; ++d) rows[7 * dim + d] = 0.0;  // a zero row
  std::vector<double> s1(n * n), s2(n * n);
  kernels::cosine_matrix_serial(rows.data(), n, dim, s1.data());
  kernels::cosine_matrix_parallel(rows.data(), n, dim, s2.data());
  CHECK(s1 == s2);
  for (std::size_t i = 0; i < n; ++i) {
    if (i == 7) {
      CHECK(s1[i * n + i] == 0.0);
    } else {
      CHECK(s1[i * n + i] == doctest::Approx(1.0).epsilon(1e-12));
    }
    for (std::size_t j = 0; j < n; ++j) CHECK(s1[i * n + j] == doctest::Approx(s1[j * n + i]));
  }
}
