#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "spnet/gradcheck.hpp"
#include "spnet/ops.hpp"
#include "spnet/tensor.hpp"

namespace spnet::test {

inline Tensor random_tensor(std::mt19937_64& rng, Shape shape,
                            bool requires_grad = false, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<double> v(shape.numel());
  for (double& x : v) x = dist(rng);
  return Tensor::from_data(shape, std::move(v), requires_grad);
}

inline Tensor random_binary(std::mt19937_64& rng, Shape shape, double p = 0.5) {
  std::bernoulli_distribution dist(p);
  std::vector<double> v(shape.numel());
  for (double& x : v) x = dist(rng) ? 1.0 : 0.0;
  return Tensor::from_data(shape, std::move(v));
}

// Relative error where the reference magnitude is >= 1e-4, absolute error
// below that.
struct GradCheckResult {
  double max_rel = 0.0;
  double max_abs_small = 0.0;
  std::size_t checked = 0;

  bool within(double rel_tol, double abs_tol) const {
    return max_rel < rel_tol && max_abs_small < abs_tol;
  }
};

/// Compares the analytic gradient of `f` (a recorded scalar) with central
/// differences, for every entry of every leaf in `leaves`.
inline GradCheckResult check_gradients(const std::function<Tensor()>& f,
                                       std::vector<Tensor> leaves,
                                       double eps = 1e-5) {
  for (Tensor& t : leaves) t.zero_grad();
  backward(f());
  GradCheckResult r;
  for (Tensor& t : leaves) {
    std::vector<EntryRef> entries;
    for (std::size_t i = 0; i < t.numel(); ++i) entries.push_back({t, i});
    const auto numeric =
        finite_diff_grad([&] { return f().item(); }, entries, eps);
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      const double a = t.grad()[i];
      const double n = numeric[i];
      const double mag = std::max(std::fabs(a), std::fabs(n));
      if (mag < 1e-4) {
        r.max_abs_small = std::max(r.max_abs_small, std::fabs(a - n));
      } else {
        r.max_rel = std::max(r.max_rel, std::fabs(a - n) / mag);
      }
      ++r.checked;
    }
  }
  return r;
}

}  // namespace spnet::test
