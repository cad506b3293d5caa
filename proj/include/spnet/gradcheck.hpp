#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "spnet/tensor.hpp"

namespace spnet {

/// One scalar entry of a tensor that the numeric oracle perturbs.
struct EntryRef {
  Tensor tensor;
  std::size_t index = 0;
};

/// Central differences (f(x + eps) - f(x - eps)) / (2 eps) for each entry.
/// The entry is restored afterwards. `f` must be deterministic.
std::vector<double> finite_diff_grad(const std::function<double()>& f,
                                     const std::vector<EntryRef>& entries,
                                     double eps = 1e-5);

/// |a - n| / max(|a|, |n|, floor). With the default floor, references below
/// 1e-4 are judged on absolute error scaled by 1e4.
double gradient_error(double analytic, double numeric, double floor = 1e-4);

}  // namespace spnet
