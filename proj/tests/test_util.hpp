#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "blockrec/param_store.hpp"
#include "blockrec/tensor.hpp"

namespace blockrec::testing {

inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({floor, std::abs(a), std::abs(b)});
}

// Central finite differences against the analytic gradient of a scalar
// function of every parameter in the store. `forward` must rebuild the
// computation from the current store contents. Returns the worst relative
// error over all parameter elements.
inline double max_grad_error(ParamStore& params, const std::function<double()>& forward,
                             const std::function<void()>& backward_into_store, double h = 1e-6) {
  params.zero_grads();
  backward_into_store();
  double worst = 0.0;
  for (auto& [name, p] : params.entries()) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double keep = p.value.values[i];
      p.value.values[i] = keep + h;
      const double up = forward();
      p.value.values[i] = keep - h;
      const double down = forward();
      p.value.values[i] = keep;
      const double fd = (up - down) / (2.0 * h);
      worst = std::max(worst, rel_err(fd, p.grad[i]));
    }
  }
  return worst;
}

}  // namespace blockrec::testing
