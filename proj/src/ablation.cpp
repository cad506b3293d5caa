#include "spnet/ablation.hpp"

#include <algorithm>

#include "spnet/metrics.hpp"

namespace spnet {

const std::vector<std::string>& variant_names() {
  static const std::vector<std::string> names{"full", "A1", "A2", "A3", "A4", "B1",
                                              "B2",   "B3", "C1", "C2", "CIM1", "CIM3"};
  return names;
}

Variant make_variant(const std::string& name, const ModelConfig& base) {
  Variant v;
  v.name = name;
  v.model = base;
  if (name == "full") {
    v.description = "complete model";
  } else if (name == "A1") {
    v.model.cim_mode = CimMode::kConcatOnly;
    v.description = "CIM replaced by concatenation";
  } else if (name == "A2") {
    v.model.cim_mode = CimMode::kEnhanceOnly;
    v.description = "CIM cross enhancement only";
  } else if (name == "A3") {
    v.model.cim_mode = CimMode::kFuseOnly;
    v.description = "CIM fusion without enhancement";
  } else if (name == "A4") {
    v.model.cim_mode = CimMode::kNoPropagation;
    v.description = "CIM without cross-level propagation";
  } else if (name == "B1") {
    v.model.mfa_mode = MfaMode::kOff;
    v.description = "no MFA";
  } else if (name == "B2") {
    v.model.mfa_mode = MfaMode::kEnhanceFusion;
    v.description = "MFA replaced by enhancement fusion";
  } else if (name == "B3") {
    v.model.mfa_mode = MfaMode::kConcat;
    v.description = "MFA replaced by concatenation";
  } else if (name == "C1") {
    v.model.specific_decoders = false;
    v.description = "modality-specific decoders removed (MFA has no inputs)";
  } else if (name == "C2") {
    v.readout = Readout::kCombined;
    v.description = "mean of the modality-specific predictions";
  } else if (name == "CIM1") {
    v.model.cim_levels = 1;
    v.description = "CIM on the top level only";
  } else if (name == "CIM3") {
    v.model.cim_levels = 3;
    v.description = "CIM on the top three levels";
  } else {
    std::string known;
    for (const auto& n : variant_names()) known += " " + n;
    throw ValidationError("unknown ablation variant '" + name + "'; known:" + known);
  }
  v.model.validate();
  return v;
}

VariantResult score_variant(const SpNet& net, const std::vector<Scene>& data, Readout readout) {
  std::vector<metrics::NamedPair> pairs;
  for (const Scene& s : data) {
    pairs.push_back({s.name, metrics::make_eval_pair(predict(net, s, readout), s.gt)});
  }
  const metrics::MetricsReport report = metrics::evaluate_dataset(std::move(pairs), 1);
  VariantResult r;
  r.s_measure = report.s_measure;
  r.mae = report.mae;
  return r;
}

std::vector<VariantResult> ablate(const RunConfig& base, const std::vector<Scene>& data,
                                  const std::vector<std::string>& variants) {
  if (variants.empty()) throw ValidationError("ablate: no variants given");
  std::vector<Variant> resolved;
  for (const auto& name : variants) resolved.push_back(make_variant(name, base.model));
  std::vector<VariantResult> out;
  for (const Variant& v : resolved) {
    RunConfig run = base;
    run.model = v.model;
    SpNet net(run.model);
    std::vector<EpochRecord> trajectory = train(net, data, run);
    PrecisionScope p32(Precision::kFloat32);
    VariantResult r = score_variant(net, data, v.readout);
    r.name = v.name;
    r.description = v.description;
    r.trajectory = std::move(trajectory);
    out.push_back(std::move(r));
  }
  return out;
}

nlohmann::json ablation_json(const std::vector<VariantResult>& results) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : results) {
    std::vector<double> losses;
    for (const auto& e : r.trajectory) losses.push_back(e.loss);
    rows.push_back({{"variant", r.name},
                    {"description", r.description},
                    {"s_measure", r.s_measure},
                    {"mae", r.mae},
                    {"epoch_loss", losses}});
  }
  return {{"variants", rows}};
}

std::string ablation_csv(const std::vector<VariantResult>& results) {
  std::string out = "variant,s_measure,mae,final_loss\n";
  for (const auto& r : results) {
    out += r.name + "," + format_double(r.s_measure) + "," + format_double(r.mae) + "," +
           (r.trajectory.empty() ? "" : format_double(r.trajectory.back().loss)) + "\n";
  }
  return out;
}

}  // namespace spnet
