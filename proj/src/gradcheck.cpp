#include "spnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace spnet {

std::vector<double> finite_diff_grad(const std::function<double()>& f,
                                     const std::vector<EntryRef>& entries,
                                     double eps) {
  if (eps <= 0.0) throw PreconditionError("finite_diff_grad: eps must be > 0");
  NoGradGuard no_grad;
  std::vector<double> out;
  out.reserve(entries.size());
  for (const EntryRef& e : entries) {
    Tensor t = e.tensor;
    auto data = t.mutable_data();
    if (e.index >= data.size()) {
      throw DimensionError("finite_diff_grad: entry index out of range");
    }
    const double saved = data[e.index];
    data[e.index] = saved + eps;
    const double plus = f();
    data[e.index] = saved - eps;
    const double minus = f();
    data[e.index] = saved;
    out.push_back((plus - minus) / (2.0 * eps));
  }
  return out;
}

double gradient_error(double analytic, double numeric, double floor) {
  const double denom =
      std::max({std::fabs(analytic), std::fabs(numeric), floor});
  return std::fabs(analytic - numeric) / denom;
}

}  // namespace spnet
