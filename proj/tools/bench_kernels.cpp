// Times the OpenMP kernels against their serial references and verifies
// the outputs are bit-identical. Sizes are chosen to be large enough for
// thread startup costs to amortize.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "blockrec/kernels.hpp"
#include "blockrec/rng.hpp"

using namespace blockrec;
using clock_type = std::chrono::steady_clock;

namespace {

double seconds_since(clock_type::time_point t0) {
  return std::chrono::duration<double>(clock_type::now() - t0).count();
}

template <typename F>
double time_best_of(int reps, F&& fn) {
  double best = 1e30;
  for (int r = 0; r < reps; ++r) {
    auto t0 = clock_type::now();
    fn();
    best = std::min(best, seconds_since(t0));
  }
  return best;
}

void report(const char* name, double serial, double parallel, bool identical) {
  std::printf("%-16s serial %8.4fs  parallel %8.4fs  speedup %5.2fx  identical %s\n", name, serial,
              parallel, serial / parallel, identical ? "yes" : "NO");
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("openmp threads: %d\n", omp_get_max_threads());
#else
  std::printf("openmp not enabled; parallel kernels run serially\n");
#endif

  Rng rng(1234);
  bool all_identical = true;

  {
    const std::size_t m = 512, k = 512, n = 512;
    std::vector<double> a(m * k), b(k * n), c1(m * n), c2(m * n);
    for (auto& x : a) x = rng.normal();
    for (auto& x : b) x = rng.normal();
    const double ts = time_best_of(3, [&] { kernels::matmul_serial(a.data(), b.data(), c1.data(), m, k, n); });
    const double tp = time_best_of(3, [&] { kernels::matmul_parallel(a.data(), b.data(), c2.data(), m, k, n); });
    const bool same = c1 == c2;
    all_identical = all_identical && same;
    report("matmul-512", ts, tp, same);
  }

  {
    const std::size_t n = 60000, dim = 32, k = 8;
    std::vector<double> pts(n * dim), means(k * dim), vars(k * dim), logw(k);
    for (auto& x : pts) x = rng.normal();
    for (auto& x : means) x = rng.normal();
    for (auto& x : vars) x = 0.5 + rng.uniform();
    for (auto& x : logw) x = std::log(1.0 / k);
    std::vector<double> r1(n * k), r2(n * k), l1(n), l2(n);
    const double ts = time_best_of(3, [&] {
      kernels::gmm_estep_serial(pts.data(), n, dim, means.data(), vars.data(), logw.data(), k,
                                r1.data(), l1.data());
    });
    const double tp = time_best_of(3, [&] {
      kernels::gmm_estep_parallel(pts.data(), n, dim, means.data(), vars.data(), logw.data(), k,
                                  r2.data(), l2.data());
    });
    const bool same = r1 == r2 && l1 == l2;
    all_identical = all_identical && same;
    report("gmm-estep-60k", ts, tp, same);
  }

  {
    const std::size_t n = 1500, dim = 32;
    std::vector<double> rows(n * dim), s1(n * n), s2(n * n);
    for (auto& x : rows) x = rng.normal();
    const double ts = time_best_of(3, [&] { kernels::cosine_matrix_serial(rows.data(), n, dim, s1.data()); });
    const double tp = time_best_of(3, [&] { kernels::cosine_matrix_parallel(rows.data(), n, dim, s2.data()); });
    const bool same = s1 == s2;
    all_identical = all_identical && same;
    report("cosine-1500", ts, tp, same);
  }

  return all_identical ? 0 : 1;
}
