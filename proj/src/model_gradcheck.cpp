#include "spnet/model_gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "spnet/gradcheck.hpp"
#include "spnet/loss.hpp"
#include "spnet/model.hpp"

namespace spnet {

namespace {

Tensor normal_tensor(std::mt19937_64& rng, Shape shape) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(shape.numel());
  for (double& x : v) x = dist(rng);
  return Tensor::from_data(shape, std::move(v));
}

// A disc per sample so the boundary weights are not trivially uniform.
Tensor disc_mask(std::mt19937_64& rng, int batch, int size) {
  std::uniform_real_distribution<double> centre(0.3 * size, 0.7 * size);
  std::uniform_real_distribution<double> radius(0.15 * size, 0.3 * size);
  std::vector<double> v(static_cast<std::size_t>(batch) * size * size);
  for (int n = 0; n < batch; ++n) {
    const double cy = centre(rng);
    const double cx = centre(rng);
    const double r = radius(rng);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double dy = y + 0.5 - cy;
        const double dx = x + 0.5 - cx;
        v[(static_cast<std::size_t>(n) * size + y) * size + x] =
            dy * dy + dx * dx <= r * r ? 1.0 : 0.0;
      }
    }
  }
  return Tensor::from_data({batch, 1, size, size}, std::move(v));
}

}  // namespace

ModelGradcheckReport model_gradcheck(const ModelConfig& model_config,
                                     const LossConfig& loss_config,
                                     const ModelGradcheckOptions& options) {
  if (options.samples < 1) {
    throw ValidationError("gradcheck: at least one sample is required");
  }
  if (options.batch < 1) {
    throw ValidationError("gradcheck: batch must be >= 1");
  }
  loss_config.validate();
  PrecisionScope precision(Precision::kFloat64);
  SpNet net(model_config);
  std::mt19937_64 rng(options.seed);
  const int size = model_config.input_size;
  const Tensor rgb = normal_tensor(rng, {options.batch, 3, size, size});
  const Tensor depth = normal_tensor(rng, {options.batch, 1, size, size});
  const Tensor gt = disc_mask(rng, options.batch, size);

  const auto loss_value = [&] {
    return total_loss(net.forward(rgb, depth), gt, loss_config);
  };

  ParameterStore& store = net.parameters();
  store.zero_grad();
  backward(loss_value());

  std::map<std::string, std::vector<std::size_t>> by_group;
  for (std::size_t i = 0; i < store.all().size(); ++i) {
    by_group[parameter_group(store.all()[i].name)].push_back(i);
  }

  ModelGradcheckReport report;
  report.tolerance = options.tolerance;
  std::vector<const std::vector<std::size_t>*> groups;
  for (const auto& [name, members] : by_group) {
    report.groups.push_back(name);
    groups.push_back(&members);
  }

  const auto f = [&] {
    NoGradGuard no_grad;
    return loss_value().item();
  };
  const double eps = options.eps;
  constexpr int kMaxDraws = 20;
  for (int s = 0; s < options.samples; ++s) {
    const std::size_t g = static_cast<std::size_t>(s) % groups.size();
    const auto& members = *groups[g];
    for (int draw = 0; draw < kMaxDraws; ++draw) {
      std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
      Parameter& p = store.all()[members[pick(rng)]];
      std::uniform_int_distribution<std::size_t> entry(0, p.value.numel() - 1);
      const std::size_t index = entry(rng);

      auto data = p.value.mutable_data();
      const double saved = data[index];
      const double centre = f();
      data[index] = saved + eps;
      const double plus = f();
      data[index] = saved - eps;
      const double minus = f();
      data[index] = saved;

      // A ReLU kink or max tie inside [x - eps, x + eps] shows up as a
      // second difference of order eps instead of eps^2.
      const double second = std::fabs(plus - 2.0 * centre + minus);
      const double slope = std::max(std::fabs(plus - minus) / 2.0, 1e-12);
      if (second > 1e-2 * slope && draw + 1 < kMaxDraws) {
        ++report.redrawn;
        continue;
      }
      GradSample sample;
      sample.parameter = p.name;
      sample.group = report.groups[g];
      sample.index = index;
      sample.analytic = p.value.grad()[index];
      sample.numeric = (plus - minus) / (2.0 * eps);
      sample.error = gradient_error(sample.analytic, sample.numeric);
      report.max_error = std::max(report.max_error, sample.error);
      report.samples.push_back(sample);
      break;
    }
  }
  return report;
}

}  // namespace spnet
