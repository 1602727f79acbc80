#include "blockrec/kernels.hpp"

#include <cmath>
#include <cstdint>

namespace blockrec::kernels {

namespace {

inline void matmul_row(const double* a, const double* b, double* c, std::size_t i, std::size_t k,
                       std::size_t n) {
  double* crow = c + i * n;
  for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
  const double* arow = a + i * k;
  for (std::size_t l = 0; l < k; ++l) {
    const double av = arow[l];
    const double* brow = b + l * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

inline void estep_point(const double* x, std::size_t dim, const double* means,
                        const double* variances, const double* log_weights, std::size_t k,
                        double* log_resp_row, double* point_ll) {
  double max_term = -HUGE_VAL;
  for (std::size_t j = 0; j < k; ++j) {
    const double* mu = means + j * dim;
    const double* var = variances + j * dim;
    double quad = 0.0, logdet = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = x[d] - mu[d];
      quad += diff * diff / var[d];
      logdet += std::log(var[d]);
    }
    const double term = log_weights[j] - 0.5 * (dim * kLog2Pi + logdet + quad);
    log_resp_row[j] = term;
    if (term > max_term) max_term = term;
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < k; ++j) sum += std::exp(log_resp_row[j] - max_term);
  const double lse = max_term + std::log(sum);
  for (std::size_t j = 0; j < k; ++j) log_resp_row[j] -= lse;
  *point_ll = lse;
}

inline void cosine_row(const double* rows, std::size_t n, std::size_t dim, std::size_t i,
                       const double* norms, double* sim) {
  const double* ri = rows + i * dim;
  for (std::size_t j = 0; j < n; ++j) {
    if (norms[i] == 0.0 || norms[j] == 0.0) {
      sim[i * n + j] = 0.0;
      continue;
    }
    const double* rj = rows + j * dim;
    double dot = 0.0;
    for (std::size_t d = 0; d < dim; ++d) dot += ri[d] * rj[d];
    sim[i * n + j] = dot / (norms[i] * norms[j]);
  }
}

}  // namespace

void matmul_serial(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) matmul_row(a, b, c, i, k, n);
}

void matmul_parallel(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                     std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(m); ++i)
    matmul_row(a, b, c, static_cast<std::size_t>(i), k, n);
}

void gmm_estep_serial(const double* points, std::size_t n, std::size_t dim, const double* means,
                      const double* variances, const double* log_weights, std::size_t k,
                      double* log_resp, double* point_ll) {
  for (std::size_t i = 0; i < n; ++i)
    estep_point(points + i * dim, dim, means, variances, log_weights, k, log_resp + i * k,
                point_ll + i);
}

void gmm_estep_parallel(const double* points, std::size_t n, std::size_t dim, const double* means,
                        const double* variances, const double* log_weights, std::size_t k,
                        double* log_resp, double* point_ll) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i)
    estep_point(points + i * dim, dim, means, variances, log_weights, k,
                log_resp + static_cast<std::size_t>(i) * k, point_ll + i);
}

void cosine_matrix_serial(const double* rows, std::size_t n, std::size_t dim, double* sim) {
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t d = 0; d < dim; ++d) s += rows[i * dim + d] * rows[i * dim + d];
    norms[i] = std::sqrt(s);
  }
  for (std::size_t i = 0; i < n; ++i) cosine_row(rows, n, dim, i, norms.data(), sim);
}

void cosine_matrix_parallel(const double* rows, std::size_t n, std::size_t dim, double* sim) {
  std::vector<double> norms(n);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    double s = 0.0;
    for (std::size_t d = 0; d < dim; ++d)
      s += rows[static_cast<std::size_t>(i) * dim + d] * rows[static_cast<std::size_t>(i) * dim + d];
    norms[static_cast<std::size_t>(i)] = std::sqrt(s);
  }
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i)
    cosine_row(rows, n, dim, static_cast<std::size_t>(i), norms.data(), sim);
}

double ordered_sum(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s;
}

}  // namespace blockrec::kernels
