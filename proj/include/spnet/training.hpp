#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "spnet/config.hpp"
#include "spnet/dataset.hpp"
#include "spnet/image_io.hpp"
#include "spnet/model.hpp"

namespace spnet {

/// A non-finite loss or value stopped the computation.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OptimizerConfig {
  std::string kind = "adam";
  double lr = 1e-4;
  double lr_decay_factor = 10.0;
  int lr_decay_every_epochs = 60;
  std::array<double, 2> betas{0.9, 0.999};
  double eps = 1e-8;

  void validate() const;
};

struct RunConfig {
  ModelConfig model;
  LossConfig loss;
  OptimizerConfig optimizer;
  int epochs = 200;
  int batch_size = 4;
  AugmentConfig augment;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const OptimizerConfig& c);
void from_json(const nlohmann::json& j, OptimizerConfig& c);
void to_json(nlohmann::json& j, const AugmentConfig& c);
void from_json(const nlohmann::json& j, AugmentConfig& c);
void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

/// Parses and validates a run configuration file. Missing keys keep their
/// defaults; unknown keys are rejected.
RunConfig load_run_config(const std::filesystem::path& path);

/// lr / factor^floor(epoch / every) for a 0-based epoch index.
double learning_rate_at(const OptimizerConfig& cfg, int epoch);

/// Adam with bias correction over every parameter of a store.
class Adam {
 public:
  Adam(ParameterStore& store, const OptimizerConfig& cfg);
  /// Applies one update from the accumulated gradients.
  void step(double lr);
  long steps() const { return t_; }

 private:
  ParameterStore& store_;
  OptimizerConfig cfg_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  long t_ = 0;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double lr = 0.0;
  double loss = 0.0;  // sample-weighted mean total loss
};

struct TrainOptions {
  /// Receives the last finite parameters when training aborts.
  std::filesystem::path checkpoint;
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Mini-batch Adam on the total loss at 32-bit precision. Each epoch draws
/// a fresh shuffle and augmentation from a generator seeded by run.seed.
/// A non-finite loss restores the parameters of the last finished epoch,
/// writes them to options.checkpoint when set and throws NumericalError.
std::vector<EpochRecord> train(SpNet& net, const std::vector<Scene>& data,
                               const RunConfig& run, const TrainOptions& options = {});

/// epoch,lr,loss rows with round-trip precision.
std::string loss_csv(const std::vector<EpochRecord>& records);

/// Which prediction is read out of a forward pass.
enum class Readout { kShared, kRgb, kDepth, kCombined };

/// Probability map for one scene evaluated alone, at the scene's size.
GrayMap predict(const SpNet& net, const Scene& scene, Readout readout = Readout::kShared);

/// Mean absolute error of predict() over a dataset.
double dataset_mae(const SpNet& net, const std::vector<Scene>& data,
                   Readout readout = Readout::kShared);

struct SaliencyMaps {
  GrayMap shared;
  std::optional<GrayMap> rgb;
  std::optional<GrayMap> depth;
};

/// Resizes the inputs to the model input size, runs one forward pass and
/// resizes the three probability maps back to the rgb image size. A gray
/// rgb image is replicated over three channels.
SaliencyMaps forward_maps(const SpNet& net, const Image& rgb, const GrayMap& depth);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace spnet
