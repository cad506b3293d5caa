#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "spnet/config.hpp"
#include "spnet/ops.hpp"
#include "spnet/parameters.hpp"
#include "spnet/tensor.hpp"

namespace spnet {

/// Five feature maps, finest first.
using PyramidFeatures = std::array<Tensor, kLevels>;

struct Conv {
  Tensor weight;
  Tensor bias;
  int stride = 1;
  int padding = 0;
  int dilation = 1;

  Tensor operator()(const Tensor& x) const {
    return conv2d(x, weight, bias, stride, padding, dilation);
  }
  bool defined() const { return weight.defined(); }
};

struct BconvStage {
  BconvParams params;
  int stride = 1;
};

struct EncoderParams {
  std::array<std::vector<BconvStage>, kLevels> levels;
};

struct RfbParams {
  Conv branch0;
  std::array<Conv, 3> reduce;
  std::array<Conv, 3> dilated;  // dilation 1, 3, 5
  Conv fuse;
  Conv residual;
};

struct DecoderParams {
  std::array<RfbParams, kLevels> stages;
  Conv head;
};

// Per-modality weights inside one CIM.
struct CimBranch {
  Conv reduce;     // 1x1 to half width; undefined on the finest level
  Conv attention;  // 3x3 producing the sigmoid gate
  BconvParams smooth;
};

struct CimParams {
  CimMode mode = CimMode::kFull;
  CimBranch rgb;
  CimBranch depth;
  BconvParams fuse_cat;      // p_cat -> p_cat1
  BconvParams enhance_fuse;  // enhance_only: [f_rgb', f_depth'] -> out
  Conv concat_conv;          // concat_only: [f_rgb, f_depth] -> out
  BconvParams propagate;     // [p_cat1, prev] -> out; undefined without prev
  bool has_propagation() const { return propagate.weight.defined(); }
};

struct MfaParams {
  MfaMode mode = MfaMode::kFull;
  Conv project_rgb;  // modality decoder width -> shared width
  Conv project_depth;
  BconvParams fuse;  // full: [g_rs, g_ds]; concat: [g_s, g_r, g_d]
  Conv attention_rgb;  // enhance_fusion gates
  Conv attention_depth;
};

/// Intermediate values of one CIM evaluation. Fields not produced by the
/// active mode stay undefined.
struct CimTrace {
  Tensor rgb_in;  // after channel reduction
  Tensor depth_in;
  Tensor w_rgb;
  Tensor w_depth;
  Tensor rgb_enhanced;
  Tensor depth_enhanced;
  Tensor p_mul;
  Tensor p_max;
  Tensor p_cat1;
  Tensor out;
};

struct DecoderOutput {
  Tensor logits;
  PyramidFeatures features;
};

struct ForwardOutput {
  Tensor s_shared;
  std::optional<Tensor> s_rgb;
  std::optional<Tensor> s_depth;
};

/// Every pyramid seen during one forward pass, for inspection.
struct ForwardTrace {
  ForwardOutput output;
  PyramidFeatures f_rgb;
  PyramidFeatures f_depth;
  PyramidFeatures f_shared;
  std::optional<PyramidFeatures> g_rgb;
  std::optional<PyramidFeatures> g_depth;
  PyramidFeatures g_shared;
};

/// Stride-2 Bconv stages reaching each configured level stride, or one
/// stride-1 stage when a level keeps the previous resolution.
EncoderParams build_encoder(ParameterStore& store, const std::string& prefix,
                            int in_channels, const ModelConfig& config);

PyramidFeatures toy_encoder_forward(const Tensor& image,
                                    const EncoderParams& params,
                                    const ModelConfig& config);

CimTrace cim_forward_trace(const Tensor& f_rgb, const Tensor& f_depth,
                           const Tensor& prev, const CimParams& params);
/// `prev` may be undefined (no propagated input).
Tensor cim_forward(const Tensor& f_rgb, const Tensor& f_depth,
                   const Tensor& prev, const CimParams& params);

Tensor rfb_forward(const Tensor& x, const RfbParams& params);

/// Aggregation on equal-shape inputs (modality features already projected).
Tensor mfa_forward(const Tensor& g_s, const Tensor& g_r, const Tensor& g_d,
                   const MfaParams& params);

struct MfaInputs {
  const PyramidFeatures* rgb = nullptr;
  const PyramidFeatures* depth = nullptr;
  const std::array<MfaParams, kLevels>* params = nullptr;
};

DecoderOutput decoder_forward(const PyramidFeatures& pyramid,
                              const DecoderParams& params, int output_size,
                              const MfaInputs& mfa = {});

/// Mean of the two sigmoid probability maps.
Tensor combine_specific_outputs(const Tensor& s_rgb, const Tensor& s_depth);

class SpNet {
 public:
  explicit SpNet(ModelConfig config);

  SpNet(const SpNet&) = delete;
  SpNet& operator=(const SpNet&) = delete;
  SpNet(SpNet&&) = default;
  SpNet& operator=(SpNet&&) = default;

  ForwardOutput forward(const Tensor& rgb, const Tensor& depth) const;
  ForwardTrace forward_trace(const Tensor& rgb, const Tensor& depth) const;

  const ModelConfig& config() const { return config_; }
  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }

  const EncoderParams& rgb_encoder() const { return enc_rgb_; }
  const EncoderParams& depth_encoder() const { return enc_depth_; }
  const std::array<CimParams, kLevels>& cims() const { return cims_; }
  const std::array<MfaParams, kLevels>& mfas() const { return mfas_; }
  const DecoderParams& shared_decoder() const { return dec_shared_; }
  const DecoderParams& rgb_decoder() const { return dec_rgb_; }
  const DecoderParams& depth_decoder() const { return dec_depth_; }

  /// Channel count of the fused CIM output at a level.
  int fused_channels(int level) const;
  int decoder_channels(int level) const;

 private:
  ModelConfig config_;
  ParameterStore store_;
  EncoderParams enc_rgb_;
  EncoderParams enc_depth_;
  DecoderParams dec_rgb_;
  DecoderParams dec_depth_;
  std::array<CimParams, kLevels> cims_;
  DecoderParams dec_shared_;
  std::array<MfaParams, kLevels> mfas_;
};

/// Submodule a parameter belongs to, e.g. "cim.3", "dec_rgb.rfb", "mfa.2".
std::string parameter_group(const std::string& name);

}  // namespace spnet
