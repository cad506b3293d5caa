#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spnet/config.hpp"

namespace spnet {

struct GradSample {
  std::string parameter;
  std::string group;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double error = 0.0;
};

struct ModelGradcheckReport {
  std::vector<GradSample> samples;
  std::vector<std::string> groups;  // every submodule group of the model
  double max_error = 0.0;
  double tolerance = 0.0;
  // Entries redrawn because the loss was not smooth around them.
  std::size_t redrawn = 0;

  bool passed() const { return max_error < tolerance; }
};

struct ModelGradcheckOptions {
  int samples = 30;
  std::uint64_t seed = 0;
  double eps = 1e-5;
  double tolerance = 1e-3;
  int batch = 2;
};

/// Compares the analytic gradient of the total loss with central differences
/// at 64-bit precision. Samples cycle through the parameter groups in name
/// order so that every submodule is covered once `samples` reaches the group
/// count. Throws ValidationError when `samples` < 1.
ModelGradcheckReport model_gradcheck(const ModelConfig& model,
                                     const LossConfig& loss,
                                     const ModelGradcheckOptions& options);

}  // namespace spnet
