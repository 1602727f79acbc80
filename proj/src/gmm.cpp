#include "blockrec/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "blockrec/errors.hpp"
#include "blockrec/kernels.hpp"
#include "blockrec/rng.hpp"

namespace blockrec {

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    const double diff = a[d] - b[d];
    s += diff * diff;
  }
  return s;
}

// k-means++ seeding: first center uniform, each next drawn with
// probability proportional to the squared distance to the nearest
// already-chosen center.
std::vector<std::vector<double>> kmeanspp_centers(const std::vector<std::vector<double>>& vectors,
                                                  std::size_t k, Rng& rng) {
  std::vector<std::vector<double>> centers;
  centers.reserve(k);
  centers.push_back(vectors[rng.uniform_index(vectors.size())]);
  std::vector<double> d2(vectors.size());
  while (centers.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < vectors.size(); ++i) {
      double best = sq_dist(vectors[i], centers[0]);
      for (std::size_t c = 1; c < centers.size(); ++c)
        best = std::min(best, sq_dist(vectors[i], centers[c]));
      d2[i] = best;
      total += best;
    }
    if (total <= 0.0) {
      // All remaining mass sits on already-chosen centers; pick uniformly.
      centers.push_back(vectors[rng.uniform_index(vectors.size())]);
      continue;
    }
    double u = rng.uniform() * total;
    std::size_t pick = vectors.size() - 1;
    for (std::size_t i = 0; i < vectors.size(); ++i) {
      u -= d2[i];
      if (u <= 0.0) {
        pick = i;
        break;
      }
    }
    centers.push_back(vectors[pick]);
  }
  return centers;
}

std::size_t count_distinct(const std::vector<std::vector<double>>& vectors) {
  std::set<std::vector<double>> s(vectors.begin(), vectors.end());
  return s.size();
}

struct FlatModel {
  std::vector<double> means, variances, log_weights;
};

FlatModel flatten(const GmmModel& m) {
  FlatModel f;
  f.means.reserve(m.k * m.dim);
  f.variances.reserve(m.k * m.dim);
  for (std::size_t j = 0; j < m.k; ++j) {
    f.means.insert(f.means.end(), m.means[j].begin(), m.means[j].end());
    f.variances.insert(f.variances.end(), m.variances[j].begin(), m.variances[j].end());
  }
  f.log_weights.resize(m.k);
  for (std::size_t j = 0; j < m.k; ++j)
    f.log_weights[j] = m.mixture_weights[j] > 0.0 ? std::log(m.mixture_weights[j]) : -HUGE_VAL;
  return f;
}

}  // namespace

namespace {

GmmModel fit_gmm_once(const std::vector<std::vector<double>>& vectors, std::size_t k,
                      std::size_t max_iter, double tol, std::uint64_t seed) {
  max_iter = std::max<std::size_t>(1, max_iter);
  const std::size_t n = vectors.size();
  const std::size_t dim = vectors[0].size();
  for (const auto& v : vectors)
    if (v.size() != dim) throw dimension_error("fit_gmm vectors must share one dimension");

  GmmModel model;
  model.requested_k = k;
  if (n < k) k = std::max<std::size_t>(1, count_distinct(vectors));
  model.k = k;
  model.dim = dim;

  Rng rng(seed);
  model.means = kmeanspp_centers(vectors, k, rng);

  // Shared per-dimension sample variance as the initial spread.
  std::vector<double> global_var(dim, 0.0), mean(dim, 0.0);
  for (const auto& v : vectors)
    for (std::size_t d = 0; d < dim; ++d) mean[d] += v[d];
  for (auto& m : mean) m /= static_cast<double>(n);
  for (const auto& v : vectors)
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = v[d] - mean[d];
      global_var[d] += diff * diff;
    }
  for (auto& g : global_var) g = std::max(kVarianceFloor, g / static_cast<double>(n));
  model.variances.assign(k, global_var);
  model.mixture_weights.assign(k, 1.0 / static_cast<double>(k));

  std::vector<double> points(n * dim);
  for (std::size_t i = 0; i < n; ++i)
    std::copy(vectors[i].begin(), vectors[i].end(), points.begin() + static_cast<long>(i * dim));

  std::vector<double> log_resp(n * k), point_ll(n);
  double prev_ll = -HUGE_VAL;
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    const FlatModel flat = flatten(model);
    kernels::gmm_estep_parallel(points.data(), n, dim, flat.means.data(), flat.variances.data(),
                                flat.log_weights.data(), k, log_resp.data(), point_ll.data());
    const double ll = kernels::ordered_sum(point_ll);
    model.log_likelihood_trace.push_back(ll);
    if (ll - prev_ll < tol && iter > 0) break;
    prev_ll = ll;

    // M-step.
    for (std::size_t j = 0; j < k; ++j) {
      double resp_sum = 0.0;
      std::vector<double> mu(dim, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double r = std::exp(log_resp[i * k + j]);
        resp_sum += r;
        for (std::size_t d = 0; d < dim; ++d) mu[d] += r * vectors[i][d];
      }
      if (resp_sum <= 1e-300) {
        model.mixture_weights[j] = 0.0;
        continue;  // dead component keeps its old mean/variance
      }
      for (auto& m : mu) m /= resp_sum;
      std::vector<double> var(dim, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double r = std::exp(log_resp[i * k + j]);
        for (std::size_t d = 0; d < dim; ++d) {
          const double diff = vectors[i][d] - mu[d];
          var[d] += r * diff * diff;
        }
      }
      for (auto& v : var) v = std::max(kVarianceFloor, v / resp_sum);
      model.means[j] = std::move(mu);
      model.variances[j] = std::move(var);
      model.mixture_weights[j] = resp_sum / static_cast<double>(n);
    }
  }
  return model;
}

}  // namespace

GmmModel fit_gmm(const std::vector<std::vector<double>>& vectors, std::size_t k,
                 std::size_t max_iter, double tol, std::uint64_t seed, std::size_t n_init) {
  if (vectors.empty()) throw contract_error("fit_gmm needs at least one vector");
  if (k == 0) throw contract_error("fit_gmm needs k >= 1");
  if (n_init == 0) throw contract_error("fit_gmm needs n_init >= 1");
  GmmModel best;
  double best_ll = -HUGE_VAL;
  for (std::size_t run = 0; run < n_init; ++run) {
    GmmModel model = fit_gmm_once(vectors, k, max_iter, tol, splitmix64stream(seed, run));
    const double ll = model.log_likelihood_trace.back();
    if (ll > best_ll) {
      best_ll = ll;
      best = std::move(model);
    }
  }
  return best;
}

std::vector<double> gmm_responsibilities(const GmmModel& model, const std::vector<double>& x) {
  if (x.size() != model.dim)
    throw dimension_error("gmm point dimension " + std::to_string(x.size()) +
                          " does not match model dimension " + std::to_string(model.dim));
  const FlatModel flat = flatten(model);
  std::vector<double> log_resp(model.k);
  double ll = 0.0;
  kernels::gmm_estep_serial(x.data(), 1, model.dim, flat.means.data(), flat.variances.data(),
                            flat.log_weights.data(), model.k, log_resp.data(), &ll);
  std::vector<double> out(model.k);
  for (std::size_t j = 0; j < model.k; ++j) out[j] = std::exp(log_resp[j]);
  return out;
}

std::size_t gmm_assign(const GmmModel& model, const std::vector<double>& x) {
  const auto resp = gmm_responsibilities(model, x);
  std::size_t best = 0;
  for (std::size_t j = 1; j < resp.size(); ++j)
    if (resp[j] > resp[best]) best = j;
  return best;
}

double gmm_log_likelihood(const GmmModel& model, const std::vector<std::vector<double>>& vectors) {
  const FlatModel flat = flatten(model);
  const std::size_t n = vectors.size();
  std::vector<double> points(n * model.dim);
  for (std::size_t i = 0; i < n; ++i)
    std::copy(vectors[i].begin(), vectors[i].end(), points.begin() + static_cast<long>(i * model.dim));
  std::vector<double> log_resp(n * model.k), point_ll(n);
  kernels::gmm_estep_serial(points.data(), n, model.dim, flat.means.data(), flat.variances.data(),
                            flat.log_weights.data(), model.k, log_resp.data(), point_ll.data());
  return kernels::ordered_sum(point_ll);
}

}  // namespace blockrec
