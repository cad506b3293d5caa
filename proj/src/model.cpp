#include "spnet/model.hpp"

#include <bit>

namespace spnet {

namespace {

std::string level_name(int level) { return std::to_string(level + 1); }

Conv make_conv(ParameterStore& store, const std::string& name, int in_c,
               int out_c, int k, int stride = 1, int dilation = 1) {
  Conv conv;
  conv.weight = store.conv_weight(name + ".weight", out_c, in_c, k);
  conv.bias = store.channel_vector(name + ".bias", out_c, Init::kZeros);
  conv.stride = stride;
  conv.dilation = dilation;
  conv.padding = k == 3 ? dilation : 0;
  return conv;
}

// Convolution bias is omitted: batch norm removes any per-channel constant.
BconvParams make_bconv(ParameterStore& store, const std::string& name,
                       int in_c, int out_c) {
  BconvParams p;
  p.weight = store.conv_weight(name + ".weight", out_c, in_c, 3);
  p.gamma = store.channel_vector(name + ".gamma", out_c, Init::kOnes);
  p.beta = store.channel_vector(name + ".beta", out_c, Init::kZeros);
  return p;
}

RfbParams make_rfb(ParameterStore& store, const std::string& prefix, int in_c,
                   int out_c) {
  RfbParams r;
  r.branch0 = make_conv(store, prefix + ".b0", in_c, out_c, 1);
  const int dilations[3] = {1, 3, 5};
  for (int i = 0; i < 3; ++i) {
    const std::string b = prefix + ".b" + std::to_string(i + 1);
    r.reduce[i] = make_conv(store, b + "a", in_c, out_c, 1);
    r.dilated[i] = make_conv(store, b + "b", out_c, out_c, 3, 1, dilations[i]);
  }
  r.fuse = make_conv(store, prefix + ".fuse", 4 * out_c, out_c, 1);
  r.residual = make_conv(store, prefix + ".res", in_c, out_c, 1);
  return r;
}

DecoderParams make_decoder(ParameterStore& store, const std::string& prefix,
                           const std::array<int, kLevels>& skip_channels,
                           const std::array<int, kLevels>& widths) {
  DecoderParams d;
  for (int m = kLevels - 1; m >= 0; --m) {
    const int in_c =
        m == kLevels - 1 ? skip_channels[m] : widths[m + 1] + skip_channels[m];
    d.stages[m] = make_rfb(store, prefix + ".rfb" + level_name(m), in_c, widths[m]);
  }
  d.head = make_conv(store, prefix + ".head", widths[0], 1, 1);
  return d;
}

int half_width(int c) { return std::max(1, c / 2); }

Tensor align_down(Tensor prev, const Shape& target) {
  while (prev.shape().h > target.h && prev.shape().w > target.w) {
    prev = downsample_avg_2x(prev);
  }
  if (prev.shape().h != target.h || prev.shape().w != target.w) {
    throw DimensionError("cim: previous output " + prev.shape().str() +
                         " cannot be aligned to " + target.str());
  }
  return prev;
}

}  // namespace

EncoderParams build_encoder(ParameterStore& store, const std::string& prefix,
                            int in_channels, const ModelConfig& cfg) {
  EncoderParams enc;
  int prev_c = in_channels;
  int prev_stride = 1;
  for (int m = 0; m < kLevels; ++m) {
    const int ratio = cfg.level_strides[m] / prev_stride;
    const int downs = std::countr_zero(static_cast<unsigned>(ratio));
    const int blocks = std::max(1, downs);
    for (int b = 0; b < blocks; ++b) {
      const std::string name =
          prefix + ".l" + level_name(m) + "." + std::to_string(b);
      enc.levels[m].push_back(
          {make_bconv(store, name, prev_c, cfg.channels[m]), downs > 0 ? 2 : 1});
      prev_c = cfg.channels[m];
    }
    prev_stride = cfg.level_strides[m];
  }
  return enc;
}

PyramidFeatures toy_encoder_forward(const Tensor& image,
                                    const EncoderParams& params,
                                    const ModelConfig& config) {
  const Shape& s = image.shape();
  if (s.h != config.input_size || s.w != config.input_size) {
    throw DimensionError("encoder: expected " +
                         std::to_string(config.input_size) + "x" +
                         std::to_string(config.input_size) + " input, got " +
                         s.str());
  }
  PyramidFeatures out;
  Tensor x = image;
  for (int m = 0; m < kLevels; ++m) {
    for (const BconvStage& stage : params.levels[m]) {
      x = bconv(x, stage.params, stage.stride);
    }
    out[m] = x;
  }
  return out;
}

CimTrace cim_forward_trace(const Tensor& f_rgb, const Tensor& f_depth,
                           const Tensor& prev, const CimParams& params) {
  if (f_rgb.shape() != f_depth.shape()) {
    throw DimensionError("cim: modality shapes differ " + f_rgb.shape().str() +
                         " vs " + f_depth.shape().str());
  }
  if (prev.defined()) {
    if (!params.has_propagation()) {
      throw PreconditionError("cim: previous output given to a CIM without a "
                              "propagation stage");
    }
    if (prev.shape().n != f_rgb.shape().n) {
      throw DimensionError("cim: previous output batch " + prev.shape().str() +
                           " incompatible with " + f_rgb.shape().str());
    }
  }
  CimTrace t;
  if (params.mode == CimMode::kConcatOnly) {
    t.out = params.concat_conv(concat_channels({f_rgb, f_depth}));
    return t;
  }

  t.rgb_in = params.rgb.reduce.defined() ? params.rgb.reduce(f_rgb) : f_rgb;
  t.depth_in =
      params.depth.reduce.defined() ? params.depth.reduce(f_depth) : f_depth;

  Tensor rgb = t.rgb_in;
  Tensor depth = t.depth_in;
  if (params.mode != CimMode::kFuseOnly) {
    t.w_rgb = sigmoid(params.rgb.attention(t.rgb_in));
    t.w_depth = sigmoid(params.depth.attention(t.depth_in));
    // Each modality is gated by the other's attention map, plus residual.
    t.rgb_enhanced = add(t.rgb_in, mul(t.rgb_in, t.w_depth));
    t.depth_enhanced = add(t.depth_in, mul(t.depth_in, t.w_rgb));
    rgb = t.rgb_enhanced;
    depth = t.depth_enhanced;
  }

  Tensor fused;
  if (params.mode == CimMode::kEnhanceOnly) {
    fused = bconv(concat_channels({rgb, depth}), params.enhance_fuse);
  } else {
    const Tensor smooth_rgb = bconv(rgb, params.rgb.smooth);
    const Tensor smooth_depth = bconv(depth, params.depth.smooth);
    t.p_mul = mul(smooth_rgb, smooth_depth);
    t.p_max = maximum(smooth_rgb, smooth_depth);
    fused = bconv(concat_channels({t.p_mul, t.p_max}), params.fuse_cat);
  }
  t.p_cat1 = fused;

  if (prev.defined()) {
    const Tensor aligned = align_down(prev, fused.shape());
    t.out = bconv(concat_channels({fused, aligned}), params.propagate);
  } else {
    t.out = fused;
  }
  return t;
}

Tensor cim_forward(const Tensor& f_rgb, const Tensor& f_depth,
                   const Tensor& prev, const CimParams& params) {
  return cim_forward_trace(f_rgb, f_depth, prev, params).out;
}

Tensor rfb_forward(const Tensor& x, const RfbParams& params) {
  std::array<Tensor, 4> branches;
  branches[0] = params.branch0(x);
  for (int i = 0; i < 3; ++i) {
    branches[i + 1] = params.dilated[i](params.reduce[i](x));
  }
  const Tensor fused = params.fuse(concat_channels(branches));
  return relu(add(fused, params.residual(x)));
}

Tensor mfa_forward(const Tensor& g_s, const Tensor& g_r, const Tensor& g_d,
                   const MfaParams& params) {
  if (g_s.shape() != g_r.shape() || g_s.shape() != g_d.shape()) {
    throw DimensionError("mfa: shapes differ " + g_s.shape().str() + ", " +
                         g_r.shape().str() + ", " + g_d.shape().str());
  }
  switch (params.mode) {
    case MfaMode::kOff:
      return g_s;
    case MfaMode::kFull: {
      const Tensor g_rs = mul(g_s, g_r);
      const Tensor g_ds = mul(g_s, g_d);
      const Tensor g_sc = bconv(concat_channels({g_rs, g_ds}), params.fuse);
      return add(g_sc, g_s);
    }
    case MfaMode::kEnhanceFusion: {
      // Our reading of the enhancement-fusion comparison block: each
      // modality produces a sigmoid gate on the shared feature, with
      // residual, and the two gated features are summed.
      const Tensor a_r = sigmoid(params.attention_rgb(g_r));
      const Tensor a_d = sigmoid(params.attention_depth(g_d));
      const Tensor by_rgb = add(g_s, mul(g_s, a_r));
      const Tensor by_depth = add(g_s, mul(g_s, a_d));
      return add(by_rgb, by_depth);
    }
    case MfaMode::kConcat:
      return bconv(concat_channels({g_s, g_r, g_d}), params.fuse);
  }
  return g_s;
}

DecoderOutput decoder_forward(const PyramidFeatures& pyramid,
                              const DecoderParams& params, int output_size,
                              const MfaInputs& mfa) {
  DecoderOutput out;
  Tensor running;
  for (int m = kLevels - 1; m >= 0; --m) {
    Tensor x = pyramid[m];
    if (running.defined()) {
      const Shape& s = pyramid[m].shape();
      Tensor up = running;
      if (up.shape().h != s.h || up.shape().w != s.w) {
        up = resize_bilinear(up, s.h, s.w);
      }
      x = concat_channels({up, pyramid[m]});
    }
    Tensor feat = rfb_forward(x, params.stages[m]);
    if (mfa.params != nullptr) {
      const MfaParams& mp = (*mfa.params)[m];
      if (mp.mode != MfaMode::kOff) {
        const Tensor& raw_r = (*mfa.rgb)[m];
        const Tensor& raw_d = (*mfa.depth)[m];
        if (raw_r.shape().h != feat.shape().h ||
            raw_d.shape().h != feat.shape().h ||
            raw_r.shape().w != feat.shape().w ||
            raw_d.shape().w != feat.shape().w) {
          throw DimensionError("decoder: MFA inputs " + raw_r.shape().str() +
                               "/" + raw_d.shape().str() +
                               " do not match stage " + feat.shape().str());
        }
        feat = mfa_forward(feat, mp.project_rgb(raw_r),
                           mp.project_depth(raw_d), mp);
      }
    }
    out.features[m] = feat;
    running = feat;
  }
  out.logits = resize_bilinear(params.head(running), output_size, output_size);
  return out;
}

Tensor combine_specific_outputs(const Tensor& s_rgb, const Tensor& s_depth) {
  if (s_rgb.shape() != s_depth.shape()) {
    throw DimensionError("combine_specific_outputs: shapes differ " +
                         s_rgb.shape().str() + " vs " + s_depth.shape().str());
  }
  return scale(add(sigmoid(s_rgb), sigmoid(s_depth)), 0.5);
}

int SpNet::fused_channels(int level) const {
  return half_width(config_.channels[level]);
}

int SpNet::decoder_channels(int level) const {
  return config_.channels[level];
}

SpNet::SpNet(ModelConfig config)
    : config_(std::move(config)), store_(config_.seed) {
  config_.validate();
  const auto& ch = config_.channels;
  std::array<int, kLevels> widths{};
  std::array<int, kLevels> fused{};
  for (int m = 0; m < kLevels; ++m) {
    widths[m] = decoder_channels(m);
    fused[m] = fused_channels(m);
  }

  enc_rgb_ = build_encoder(store_, "enc_rgb", 3, config_);
  enc_depth_ = build_encoder(store_, "enc_depth", 1, config_);
  if (config_.specific_decoders) {
    dec_rgb_ = make_decoder(store_, "dec_rgb", ch, widths);
    dec_depth_ = make_decoder(store_, "dec_depth", ch, widths);
  }

  const int first_cim = config_.first_cim_level();
  for (int m = 0; m < kLevels; ++m) {
    CimParams& p = cims_[m];
    const std::string prefix = "cim." + level_name(m);
    const bool is_cim = m >= first_cim;
    p.mode = is_cim ? config_.cim_mode : CimMode::kConcatOnly;
    if (p.mode == CimMode::kConcatOnly) {
      p.concat_conv = make_conv(store_, prefix + ".concat_conv", 2 * ch[m],
                                fused[m], 3);
      continue;
    }
    const bool reduce = m > 0;
    const int width = reduce ? half_width(ch[m]) : ch[m];
    for (auto [branch, tag] : {std::pair{&p.rgb, "r"}, std::pair{&p.depth, "d"}}) {
      if (reduce) {
        branch->reduce = make_conv(store_, prefix + ".reduce_" + tag, ch[m],
                                   width, 1);
      }
      if (p.mode != CimMode::kFuseOnly) {
        branch->attention =
            make_conv(store_, prefix + ".wconv_" + tag, width, width, 3);
      }
      if (p.mode != CimMode::kEnhanceOnly) {
        branch->smooth =
            make_bconv(store_, prefix + ".bconv_" + tag, width, width);
      }
    }
    if (p.mode == CimMode::kEnhanceOnly) {
      p.enhance_fuse =
          make_bconv(store_, prefix + ".bconv_enh", 2 * width, fused[m]);
    } else {
      p.fuse_cat = make_bconv(store_, prefix + ".bconv_cat", 2 * width, fused[m]);
    }
    const bool has_prev = m > 0 && m - 1 >= first_cim &&
                          p.mode != CimMode::kNoPropagation;
    if (has_prev) {
      p.propagate = make_bconv(store_, prefix + ".bconv_prop",
                               fused[m] + fused[m - 1], fused[m]);
    }
  }

  dec_shared_ = make_decoder(store_, "dec_shared", fused, widths);

  if (config_.specific_decoders) {
    for (int m = 0; m < kLevels; ++m) {
      MfaParams& p = mfas_[m];
      p.mode = config_.mfa_mode;
      if (p.mode == MfaMode::kOff) continue;
      const std::string prefix = "mfa." + level_name(m);
      p.project_rgb = make_conv(store_, prefix + ".proj_r", widths[m], widths[m], 1);
      p.project_depth =
          make_conv(store_, prefix + ".proj_d", widths[m], widths[m], 1);
      switch (p.mode) {
        case MfaMode::kFull:
          p.fuse = make_bconv(store_, prefix + ".bconv", 2 * widths[m], widths[m]);
          break;
        case MfaMode::kConcat:
          p.fuse = make_bconv(store_, prefix + ".bconv", 3 * widths[m], widths[m]);
          break;
        case MfaMode::kEnhanceFusion:
          p.attention_rgb =
              make_conv(store_, prefix + ".attn_r", widths[m], widths[m], 3);
          p.attention_depth =
              make_conv(store_, prefix + ".attn_d", widths[m], widths[m], 3);
          break;
        case MfaMode::kOff:
          break;
      }
    }
  } else {
    for (MfaParams& p : mfas_) p.mode = MfaMode::kOff;
  }
}

ForwardTrace SpNet::forward_trace(const Tensor& rgb, const Tensor& depth) const {
  const int size = config_.input_size;
  if (rgb.shape() != Shape{rgb.shape().n, 3, size, size} ||
      depth.shape() != Shape{rgb.shape().n, 1, size, size}) {
    throw DimensionError("spnet: expected rgb (N,3," + std::to_string(size) +
                         "," + std::to_string(size) + ") and depth (N,1,...), got " +
                         rgb.shape().str() + " and " + depth.shape().str());
  }
  ForwardTrace t;
  t.f_rgb = toy_encoder_forward(rgb, enc_rgb_, config_);
  t.f_depth = toy_encoder_forward(depth, enc_depth_, config_);

  if (config_.specific_decoders) {
    DecoderOutput dr = decoder_forward(t.f_rgb, dec_rgb_, size);
    DecoderOutput dd = decoder_forward(t.f_depth, dec_depth_, size);
    t.output.s_rgb = dr.logits;
    t.output.s_depth = dd.logits;
    t.g_rgb = dr.features;
    t.g_depth = dd.features;
  }

  Tensor prev;
  for (int m = 0; m < kLevels; ++m) {
    const CimParams& p = cims_[m];
    const Tensor carried = p.has_propagation() ? prev : Tensor();
    t.f_shared[m] = cim_forward(t.f_rgb[m], t.f_depth[m], carried, p);
    prev = t.f_shared[m];
  }

  MfaInputs mfa;
  if (config_.specific_decoders && config_.mfa_mode != MfaMode::kOff) {
    mfa.rgb = &*t.g_rgb;
    mfa.depth = &*t.g_depth;
    mfa.params = &mfas_;
  }
  DecoderOutput ds = decoder_forward(t.f_shared, dec_shared_, size, mfa);
  t.output.s_shared = ds.logits;
  t.g_shared = ds.features;
  return t;
}

ForwardOutput SpNet::forward(const Tensor& rgb, const Tensor& depth) const {
  return forward_trace(rgb, depth).output;
}

std::string parameter_group(const std::string& name) {
  const auto first = name.find('.');
  const std::string head = name.substr(0, first);
  if (head == "cim" || head == "mfa") {
    const auto second = name.find('.', first + 1);
    return name.substr(0, second);
  }
  if (head.rfind("dec_", 0) == 0) {
    const auto second = name.find('.', first + 1);
    const std::string part = name.substr(first + 1, second - first - 1);
    return head + (part == "head" ? ".head" : ".rfb");
  }
  return head;
}

}  // namespace spnet
