#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "spnet/training.hpp"

namespace spnet {

struct Variant {
  std::string name;
  std::string description;
  ModelConfig model;
  Readout readout = Readout::kShared;
};

/// full, A1-A4, B1-B3, C1, C2, CIM1, CIM3 in that order.
const std::vector<std::string>& variant_names();

/// The base model with one toggle changed. Throws ValidationError for an
/// unknown name.
Variant make_variant(const std::string& name, const ModelConfig& base);

struct VariantResult {
  std::string name;
  std::string description;
  std::vector<EpochRecord> trajectory;
  double s_measure = 0.0;
  double mae = 0.0;
};

/// Trains every variant from the same seed on the same data and scores its
/// readout on the training set.
std::vector<VariantResult> ablate(const RunConfig& base, const std::vector<Scene>& data,
                                  const std::vector<std::string>& variants);

/// Scores a trained model's readout on a dataset (S-measure, MAE).
VariantResult score_variant(const SpNet& net, const std::vector<Scene>& data, Readout readout);

nlohmann::json ablation_json(const std::vector<VariantResult>& results);
/// variant,s_measure,mae,final_loss
std::string ablation_csv(const std::vector<VariantResult>& results);

}  // namespace spnet
