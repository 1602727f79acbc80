#pragma once

#include <cstdint>
#include <vector>

namespace blockrec {

// Diagonal-covariance Gaussian mixture fitted by EM. Variances are
// floored at kVarianceFloor so duplicated vectors cannot produce a
// singular component.
struct GmmModel {
  std::size_t k = 0;
  std::size_t requested_k = 0;  // differs from k when too few distinct vectors
  std::size_t dim = 0;
  std::vector<std::vector<double>> means;
  std::vector<std::vector<double>> variances;
  std::vector<double> mixture_weights;
  std::vector<double> log_likelihood_trace;  // one entry per EM iteration
};

inline constexpr double kVarianceFloor = 1e-6;

// EM with k-means++ seeding. Responsibilities are computed in log space;
// iteration stops when the total log-likelihood improves by less than
// `tol` or after `max_iter` iterations. With fewer vectors than k the fit
// falls back to k' = number of distinct vectors. n_init independently
// seeded runs are fitted and the best final log-likelihood wins; the
// returned trace is the winning run's.
GmmModel fit_gmm(const std::vector<std::vector<double>>& vectors, std::size_t k,
                 std::size_t max_iter, double tol, std::uint64_t seed, std::size_t n_init = 3);

// Normalized responsibilities of one point (linear scale, sums to 1).
std::vector<double> gmm_responsibilities(const GmmModel& model, const std::vector<double>& x);

// Hard assignment: argmax responsibility, ties to the lowest component.
std::size_t gmm_assign(const GmmModel& model, const std::vector<double>& x);

// Total log-likelihood of a point set under the model.
double gmm_log_likelihood(const GmmModel& model, const std::vector<std::vector<double>>& vectors);

}  // namespace blockrec
