#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

namespace spnet {

inline constexpr int kLevels = 5;

// Invalid user-supplied configuration or input data.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class CimMode { kFull, kConcatOnly, kEnhanceOnly, kFuseOnly, kNoPropagation };
enum class MfaMode { kFull, kOff, kEnhanceFusion, kConcat };

std::string_view to_string(CimMode mode);
std::string_view to_string(MfaMode mode);
CimMode parse_cim_mode(std::string_view text);
MfaMode parse_mfa_mode(std::string_view text);

struct ModelConfig {
  int input_size = 64;
  std::array<int, kLevels> channels{4, 8, 16, 32, 64};
  std::array<int, kLevels> level_strides{4, 4, 8, 16, 32};
  CimMode cim_mode = CimMode::kFull;
  int cim_levels = 5;
  MfaMode mfa_mode = MfaMode::kFull;
  bool specific_decoders = true;
  std::uint64_t seed = 0;

  static ModelConfig full_scale();

  void validate() const;
  int level_size(int level) const { return input_size / level_strides[level]; }
  // First level (0-based) that runs the configured CIM; lower levels fall
  // back to concatenation fusion.
  int first_cim_level() const { return kLevels - cim_levels; }
};

struct LossConfig {
  double edge_weight_gain = 5.0;
  int edge_window = 15;
  double iou_smoothing = 1.0;

  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const LossConfig& c);
void from_json(const nlohmann::json& j, LossConfig& c);

}  // namespace spnet
