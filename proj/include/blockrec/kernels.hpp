#pragma once

#include <cstddef>
#include <vector>

namespace blockrec::kernels {

// Dense kernels used by the hot paths. Each has a serial reference
// implementation and an OpenMP variant that must produce bit-identical
// results (parallelism is over independent output slots; reductions are
// finished serially in index order). tools/bench_kernels compares them.

// c[m x n] = a[m x k] * b[k x n]
void matmul_serial(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n);
void matmul_parallel(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                     std::size_t n);

// Per-point diagonal-Gaussian mixture E-step. For each point i:
//   log_resp[i*k + j] = normalized log responsibility of component j
//   point_ll[i]       = log-likelihood contribution of point i
// means/variances/log_weights are k rows of dim entries (variances positive).
void gmm_estep_serial(const double* points, std::size_t n, std::size_t dim, const double* means,
                      const double* variances, const double* log_weights, std::size_t k,
                      double* log_resp, double* point_ll);
void gmm_estep_parallel(const double* points, std::size_t n, std::size_t dim, const double* means,
                        const double* variances, const double* log_weights, std::size_t k,
                        double* log_resp, double* point_ll);

// sim[i*n + j] = cosine similarity between rows i and j of a row-major
// n x dim matrix. Zero rows get similarity 0 (including the diagonal).
void cosine_matrix_serial(const double* rows, std::size_t n, std::size_t dim, double* sim);
void cosine_matrix_parallel(const double* rows, std::size_t n, std::size_t dim, double* sim);

// Deterministic sum: parallel variants fill per-slot arrays, callers fold
// them in index order with this.
double ordered_sum(const std::vector<double>& xs);

}  // namespace blockrec::kernels
