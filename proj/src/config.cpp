#include "spnet/config.hpp"

#include <algorithm>
#include <iterator>

namespace spnet {

std::string_view to_string(CimMode mode) {
  switch (mode) {
    case CimMode::kFull: return "full";
    case CimMode::kConcatOnly: return "concat_only";
    case CimMode::kEnhanceOnly: return "enhance_only";
    case CimMode::kFuseOnly: return "fuse_only";
    case CimMode::kNoPropagation: return "no_propagation";
  }
  return "?";
}

std::string_view to_string(MfaMode mode) {
  switch (mode) {
    case MfaMode::kFull: return "full";
    case MfaMode::kOff: return "off";
    case MfaMode::kEnhanceFusion: return "enhance_fusion";
    case MfaMode::kConcat: return "concat";
  }
  return "?";
}

CimMode parse_cim_mode(std::string_view text) {
  for (CimMode m : {CimMode::kFull, CimMode::kConcatOnly, CimMode::kEnhanceOnly,
                    CimMode::kFuseOnly, CimMode::kNoPropagation}) {
    if (to_string(m) == text) return m;
  }
  throw ValidationError("unknown cim_mode: " + std::string(text));
}

MfaMode parse_mfa_mode(std::string_view text) {
  for (MfaMode m : {MfaMode::kFull, MfaMode::kOff, MfaMode::kEnhanceFusion,
                    MfaMode::kConcat}) {
    if (to_string(m) == text) return m;
  }
  throw ValidationError("unknown mfa_mode: " + std::string(text));
}

ModelConfig ModelConfig::full_scale() {
  ModelConfig c;
  c.input_size = 352;
  c.channels = {64, 256, 512, 1024, 2048};
  return c;
}

namespace {

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

}  // namespace

void ModelConfig::validate() const {
  if (input_size < 1) throw ValidationError("input_size must be positive");
  for (int c : channels) {
    if (c < 1) throw ValidationError("channels must be strictly positive");
  }
  int prev = 1;
  for (int m = 0; m < kLevels; ++m) {
    const int s = level_strides[m];
    if (s < prev) {
      throw ValidationError("level_strides must be non-decreasing");
    }
    if (!is_power_of_two(s) || s < 2 || s % prev != 0) {
      throw ValidationError(
          "level_strides must be powers of two >= 2, got " + std::to_string(s));
    }
    if (input_size % s != 0) {
      throw ValidationError("input_size " + std::to_string(input_size) +
                            " is not divisible by stride " + std::to_string(s));
    }
    prev = s;
  }
  if (cim_levels != 1 && cim_levels != 3 && cim_levels != 5) {
    throw ValidationError("cim_levels must be 1, 3 or 5");
  }
}

void LossConfig::validate() const {
  if (edge_weight_gain < 0.0) {
    throw ValidationError("edge_weight_gain must be >= 0");
  }
  if (edge_window < 1 || edge_window % 2 == 0) {
    throw ValidationError("edge_window must be odd and >= 1");
  }
  if (iou_smoothing < 0.0) throw ValidationError("iou_smoothing must be >= 0");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"input_size", c.input_size},
                     {"channels", c.channels},
                     {"level_strides", c.level_strides},
                     {"cim_mode", std::string(to_string(c.cim_mode))},
                     {"cim_levels", c.cim_levels},
                     {"mfa_mode", std::string(to_string(c.mfa_mode))},
                     {"specific_decoders", c.specific_decoders},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  static const char* kKnown[] = {"input_size", "channels",  "level_strides",
                                 "cim_mode",   "cim_levels", "mfa_mode",
                                 "specific_decoders", "seed"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(std::begin(kKnown), std::end(kKnown), key) == std::end(kKnown)) {
      throw ValidationError("unknown model config field: " + key);
    }
  }
  c.input_size = j.value("input_size", c.input_size);
  if (j.contains("channels")) j.at("channels").get_to(c.channels);
  if (j.contains("level_strides")) j.at("level_strides").get_to(c.level_strides);
  if (j.contains("cim_mode")) {
    c.cim_mode = parse_cim_mode(j.at("cim_mode").get<std::string>());
  }
  c.cim_levels = j.value("cim_levels", c.cim_levels);
  if (j.contains("mfa_mode")) {
    c.mfa_mode = parse_mfa_mode(j.at("mfa_mode").get<std::string>());
  }
  c.specific_decoders = j.value("specific_decoders", c.specific_decoders);
  c.seed = j.value("seed", c.seed);
  c.validate();
}

void to_json(nlohmann::json& j, const LossConfig& c) {
  j = nlohmann::json{{"edge_weight_gain", c.edge_weight_gain},
                     {"edge_window", c.edge_window},
                     {"iou_smoothing", c.iou_smoothing}};
}

void from_json(const nlohmann::json& j, LossConfig& c) {
  c.edge_weight_gain = j.value("edge_weight_gain", c.edge_weight_gain);
  c.edge_window = j.value("edge_window", c.edge_window);
  c.iou_smoothing = j.value("iou_smoothing", c.iou_smoothing);
  c.validate();
}

}  // namespace spnet
