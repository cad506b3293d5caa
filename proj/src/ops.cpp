#include "spnet/ops.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>

namespace spnet {

namespace testing {

namespace {
std::atomic<BackwardFault> g_fault{BackwardFault::kNone};
}

void set_backward_fault(BackwardFault fault) { g_fault.store(fault); }
BackwardFault backward_fault() { return g_fault.load(); }

}  // namespace testing

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         a.shape().str() + " vs " + b.shape().str());
  }
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) {
    throw DimensionError(std::string(op) + ": undefined tensor argument");
  }
}

inline std::size_t index4(const Shape& s, int n, int c, int h, int w) {
  return ((static_cast<std::size_t>(n) * s.c + c) * s.h + h) * s.w + w;
}

// Range of output positions o with 0 <= o*stride + offset < extent.
struct ValidRange {
  int lo;
  int hi;  // exclusive
};

ValidRange valid_outputs(int out_extent, int in_extent, int stride,
                         int offset) {
  int lo = 0;
  if (offset < 0) lo = (-offset + stride - 1) / stride;
  int hi = out_extent;
  // largest o with o*stride + offset <= in_extent - 1
  const int top = in_extent - 1 - offset;
  if (top < 0) {
    hi = 0;
  } else {
    hi = std::min(hi, top / stride + 1);
  }
  return {lo, std::max(lo, hi)};
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int padding, int dilation) {
  require_defined(input, "conv2d");
  require_defined(weight, "conv2d");
  const Shape& is = input.shape();
  const Shape& ws = weight.shape();
  if (ws.c != is.c) {
    throw DimensionError("conv2d: input " + is.str() +
                         " has a channel count different from weight " +
                         ws.str());
  }
  if (ws.h != ws.w || (ws.h != 1 && ws.h != 3)) {
    throw DimensionError("conv2d: kernel must be 1x1 or 3x3, weight " +
                         ws.str());
  }
  if (stride < 1 || padding < 0 || dilation < 1) {
    throw PreconditionError("conv2d: stride >= 1, padding >= 0, dilation >= 1");
  }
  if (bias.defined() && bias.numel() != static_cast<std::size_t>(ws.n)) {
    throw DimensionError("conv2d: bias " + bias.shape().str() +
                         " does not match weight " + ws.str());
  }
  const int k = ws.h;
  const int span_k = dilation * (k - 1) + 1;
  const int out_h = (is.h + 2 * padding - span_k) / stride + 1;
  const int out_w = (is.w + 2 * padding - span_k) / stride + 1;
  if (is.h + 2 * padding < span_k || is.w + 2 * padding < span_k) {
    throw DimensionError("conv2d: input " + is.str() +
                         " smaller than the kernel footprint");
  }
  const Shape os{is.n, ws.n, out_h, out_w};

  std::vector<ValidRange> row_range(k), col_range(k);
  for (int kk = 0; kk < k; ++kk) {
    row_range[kk] = valid_outputs(out_h, is.h, stride, kk * dilation - padding);
    col_range[kk] = valid_outputs(out_w, is.w, stride, kk * dilation - padding);
  }

  std::vector<double> out(os.numel(), 0.0);
  const auto x = input.data();
  const auto wt = weight.data();
  const auto b = bias.data();
  for (int n = 0; n < is.n; ++n) {
    for (int o = 0; o < ws.n; ++o) {
      double* dst = &out[index4(os, n, o, 0, 0)];
      if (bias.defined()) std::fill(dst, dst + os.plane(), b[o]);
      for (int c = 0; c < is.c; ++c) {
        const double* src = &x[index4(is, n, c, 0, 0)];
        for (int kh = 0; kh < k; ++kh) {
          const int dy = kh * dilation - padding;
          for (int kw = 0; kw < k; ++kw) {
            const int dx = kw * dilation - padding;
            const double wv = wt[index4(ws, o, c, kh, kw)];
            for (int oh = row_range[kh].lo; oh < row_range[kh].hi; ++oh) {
              const double* srow = src + static_cast<std::size_t>(oh * stride + dy) * is.w;
              double* drow = dst + static_cast<std::size_t>(oh) * out_w;
              for (int ow = col_range[kw].lo; ow < col_range[kw].hi; ++ow) {
                drow[ow] += wv * srow[ow * stride + dx];
              }
            }
          }
        }
      }
    }
  }

  std::vector<Tensor> inputs{input, weight};
  if (bias.defined()) inputs.push_back(bias);
  const bool has_bias = bias.defined();
  return make_result(
      os, std::move(out), std::move(inputs), "conv2d",
      [is, ws, os, k, stride, padding, dilation, has_bias, row_range,
       col_range](detail::Node& self) {
        detail::Node& in = *self.inputs[0];
        detail::Node& wn = *self.inputs[1];
        const auto& g = self.grad;
        const auto& xv = in.value;
        const auto& wv = wn.value;
        double* gx = in.requires_grad ? in.ensure_grad().data() : nullptr;
        double* gw = wn.requires_grad ? wn.ensure_grad().data() : nullptr;
        std::vector<double> gw_local;
        if (gw) gw_local.assign(ws.numel(), 0.0);
        for (int n = 0; n < is.n; ++n) {
          for (int o = 0; o < ws.n; ++o) {
            const double* gplane = &g[index4(os, n, o, 0, 0)];
            for (int c = 0; c < is.c; ++c) {
              const std::size_t in_off = index4(is, n, c, 0, 0);
              for (int kh = 0; kh < k; ++kh) {
                const int dy = kh * dilation - padding;
                for (int kw = 0; kw < k; ++kw) {
                  const int dx = kw * dilation - padding;
                  const std::size_t widx = index4(ws, o, c, kh, kw);
                  const double w = wv[widx];
                  double acc = 0.0;
                  for (int oh = row_range[kh].lo; oh < row_range[kh].hi; ++oh) {
                    const std::size_t row = in_off + static_cast<std::size_t>(oh * stride + dy) * is.w;
                    const double* grow = gplane + static_cast<std::size_t>(oh) * os.w;
                    for (int ow = col_range[kw].lo; ow < col_range[kw].hi; ++ow) {
                      const std::size_t xi = row + ow * stride + dx;
                      if (gx) gx[xi] += w * grow[ow];
                      acc += xv[xi] * grow[ow];
                    }
                  }
                  if (gw) gw_local[widx] += acc;
                }
              }
            }
          }
        }
        if (gw) {
          const double factor =
              testing::backward_fault() == testing::BackwardFault::kConv2dWeight
                  ? 1.01
                  : 1.0;
          for (std::size_t i = 0; i < gw_local.size(); ++i) {
            gw[i] += factor * gw_local[i];
          }
        }
        if (has_bias) {
          detail::Node& bn = *self.inputs[2];
          if (bn.requires_grad) {
            auto& gb = bn.ensure_grad();
            for (int n = 0; n < is.n; ++n) {
              for (int o = 0; o < ws.n; ++o) {
                const double* gplane = &g[index4(os, n, o, 0, 0)];
                double acc = 0.0;
                for (std::size_t i = 0; i < os.plane(); ++i) acc += gplane[i];
                gb[o] += acc;
              }
            }
          }
        }
      });
}

Tensor sigmoid(const Tensor& x) {
  require_defined(x, "sigmoid");
  const auto v = x.data();
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-v[i]));
    } else {
      const double e = std::exp(v[i]);
      out[i] = e / (1.0 + e);
    }
  }
  return make_result(x.shape(), std::move(out), {x}, "sigmoid",
                     [](detail::Node& self) {
                       detail::Node& in = *self.inputs[0];
                       if (!in.requires_grad) return;
                       auto& gx = in.ensure_grad();
                       const double factor =
                           testing::backward_fault() ==
                                   testing::BackwardFault::kSigmoid
                               ? 1.5
                               : 1.0;
                       for (std::size_t i = 0; i < gx.size(); ++i) {
                         const double y = self.value[i];
                         gx[i] += factor * self.grad[i] * y * (1.0 - y);
                       }
                     });
}

Tensor relu(const Tensor& x) {
  require_defined(x, "relu");
  const auto v = x.data();
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] > 0.0 || std::isnan(v[i]) ? v[i] : 0.0;
  return make_result(x.shape(), std::move(out), {x}, "relu",
                     [](detail::Node& self) {
                       detail::Node& in = *self.inputs[0];
                       if (!in.requires_grad) return;
                       auto& gx = in.ensure_grad();
                       for (std::size_t i = 0; i < gx.size(); ++i) {
                         if (in.value[i] > 0.0) gx[i] += self.grad[i];
                       }
                     });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double epsilon) {
  require_defined(x, "batch_norm");
  const Shape& s = x.shape();
  if (gamma.numel() != static_cast<std::size_t>(s.c) ||
      beta.numel() != static_cast<std::size_t>(s.c)) {
    throw DimensionError("batch_norm: affine parameters " +
                         gamma.shape().str() + "/" + beta.shape().str() +
                         " do not match input " + s.str());
  }
  const std::size_t population = static_cast<std::size_t>(s.n) * s.plane();
  if (population < 2) {
    throw PreconditionError(
        "batch_norm: batch*height*width per channel must be >= 2, input " +
        s.str());
  }
  const auto v = x.data();
  const auto gm = gamma.data();
  const auto bt = beta.data();
  std::vector<double> xhat(v.size());
  std::vector<double> inv_std(s.c);
  std::vector<double> out(v.size());
  const double inv_m = 1.0 / static_cast<double>(population);
  for (int c = 0; c < s.c; ++c) {
    double mean = 0.0;
    for (int n = 0; n < s.n; ++n) {
      const double* p = &v[index4(s, n, c, 0, 0)];
      for (std::size_t i = 0; i < s.plane(); ++i) mean += p[i];
    }
    mean *= inv_m;
    double var = 0.0;
    for (int n = 0; n < s.n; ++n) {
      const double* p = &v[index4(s, n, c, 0, 0)];
      for (std::size_t i = 0; i < s.plane(); ++i) {
        const double d = p[i] - mean;
        var += d * d;
      }
    }
    var *= inv_m;
    inv_std[c] = 1.0 / std::sqrt(var + epsilon);
    for (int n = 0; n < s.n; ++n) {
      const std::size_t off = index4(s, n, c, 0, 0);
      for (std::size_t i = 0; i < s.plane(); ++i) {
        xhat[off + i] = (v[off + i] - mean) * inv_std[c];
        out[off + i] = gm[c] * xhat[off + i] + bt[c];
      }
    }
  }
  return make_result(
      s, std::move(out), {x, gamma, beta}, "batch_norm",
      [s, population, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](detail::Node& self) {
        detail::Node& in = *self.inputs[0];
        detail::Node& gn = *self.inputs[1];
        detail::Node& bn = *self.inputs[2];
        const auto& g = self.grad;
        const double m = static_cast<double>(population);
        for (int c = 0; c < s.c; ++c) {
          double sum_g = 0.0;
          double sum_g_xhat = 0.0;
          for (int n = 0; n < s.n; ++n) {
            const std::size_t off = index4(s, n, c, 0, 0);
            for (std::size_t i = 0; i < s.plane(); ++i) {
              sum_g += g[off + i];
              sum_g_xhat += g[off + i] * xhat[off + i];
            }
          }
          if (gn.requires_grad) gn.ensure_grad()[c] += sum_g_xhat;
          if (bn.requires_grad) bn.ensure_grad()[c] += sum_g;
          if (in.requires_grad) {
            auto& gx = in.ensure_grad();
            const double gamma_c = gn.value[c];
            const double k = gamma_c * inv_std[c] / m;
            for (int n = 0; n < s.n; ++n) {
              const std::size_t off = index4(s, n, c, 0, 0);
              for (std::size_t i = 0; i < s.plane(); ++i) {
                gx[off + i] += k * (m * g[off + i] - sum_g -
                                    xhat[off + i] * sum_g_xhat);
              }
            }
          }
        }
      });
}

Tensor bconv(const Tensor& x, const BconvParams& p, int stride) {
  return relu(batch_norm(conv2d(x, p.weight, p.bias, stride, 1), p.gamma,
                         p.beta));
}

Tensor eltwise(EltwiseOp op, const Tensor& a, const Tensor& b) {
  require_defined(a, "eltwise");
  require_defined(b, "eltwise");
  require_same_shape(a, b, "eltwise");
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(av.size());
  switch (op) {
    case EltwiseOp::kAdd:
      for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
      break;
    case EltwiseOp::kMul:
      for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
      break;
    case EltwiseOp::kMax:
      for (std::size_t i = 0; i < av.size(); ++i) {
        out[i] = av[i] >= bv[i] ? av[i] : bv[i];
      }
      break;
  }
  const char* name = op == EltwiseOp::kAdd   ? "add"
                     : op == EltwiseOp::kMul ? "mul"
                                             : "max";
  return make_result(
      a.shape(), std::move(out), {a, b}, name, [op](detail::Node& self) {
        detail::Node& na = *self.inputs[0];
        detail::Node& nb = *self.inputs[1];
        const auto& g = self.grad;
        double* ga = na.requires_grad ? na.ensure_grad().data() : nullptr;
        double* gb = nb.requires_grad ? nb.ensure_grad().data() : nullptr;
        for (std::size_t i = 0; i < g.size(); ++i) {
          switch (op) {
            case EltwiseOp::kAdd:
              if (ga) ga[i] += g[i];
              if (gb) gb[i] += g[i];
              break;
            case EltwiseOp::kMul:
              if (ga) ga[i] += g[i] * nb.value[i];
              if (gb) gb[i] += g[i] * na.value[i];
              break;
            case EltwiseOp::kMax:
              if (na.value[i] >= nb.value[i]) {
                if (ga) ga[i] += g[i];
              } else if (gb) {
                gb[i] += g[i];
              }
              break;
          }
        }
      });
}

Tensor scale(const Tensor& x, double factor) {
  require_defined(x, "scale");
  const auto v = x.data();
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * factor;
  return make_result(x.shape(), std::move(out), {x}, "scale",
                     [factor](detail::Node& self) {
                       detail::Node& in = *self.inputs[0];
                       if (!in.requires_grad) return;
                       auto& gx = in.ensure_grad();
                       for (std::size_t i = 0; i < gx.size(); ++i) {
                         gx[i] += factor * self.grad[i];
                       }
                     });
}

Tensor concat_channels(std::span<const Tensor> parts) {
  if (parts.empty()) {
    throw DimensionError("concat_channels: empty list of tensors");
  }
  for (const Tensor& t : parts) require_defined(t, "concat_channels");
  const Shape& first = parts.front().shape();
  int channels = 0;
  for (const Tensor& t : parts) {
    const Shape& s = t.shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw DimensionError("concat_channels: spatial mismatch " + first.str() +
                           " vs " + s.str());
    }
    channels += s.c;
  }
  const Shape os{first.n, channels, first.h, first.w};
  std::vector<double> out(os.numel());
  std::vector<int> offsets;
  int c0 = 0;
  for (const Tensor& t : parts) {
    const Shape& s = t.shape();
    const auto v = t.data();
    for (int n = 0; n < s.n; ++n) {
      std::copy_n(&v[index4(s, n, 0, 0, 0)], static_cast<std::size_t>(s.c) * s.plane(),
                  &out[index4(os, n, c0, 0, 0)]);
    }
    offsets.push_back(c0);
    c0 += s.c;
  }
  return make_result(
      os, std::move(out), std::vector<Tensor>(parts.begin(), parts.end()),
      "concat_channels", [os, offsets](detail::Node& self) {
        for (std::size_t p = 0; p < self.inputs.size(); ++p) {
          detail::Node& in = *self.inputs[p];
          if (!in.requires_grad) continue;
          auto& gx = in.ensure_grad();
          const Shape& s = in.shape;
          const std::size_t block = static_cast<std::size_t>(s.c) * s.plane();
          for (int n = 0; n < s.n; ++n) {
            const double* src = &self.grad[index4(os, n, offsets[p], 0, 0)];
            double* dst = &gx[index4(s, n, 0, 0, 0)];
            for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
          }
        }
      });
}

Tensor slice_channels(const Tensor& x, int begin, int count) {
  require_defined(x, "slice_channels");
  const Shape& s = x.shape();
  if (begin < 0 || count < 0 || begin + count > s.c) {
    throw DimensionError("slice_channels: range [" + std::to_string(begin) +
                         "," + std::to_string(begin + count) +
                         ") out of bounds for " + s.str());
  }
  const Shape os{s.n, count, s.h, s.w};
  std::vector<double> out(os.numel());
  const auto v = x.data();
  const std::size_t block = static_cast<std::size_t>(count) * s.plane();
  for (int n = 0; n < s.n; ++n) {
    std::copy_n(&v[index4(s, n, begin, 0, 0)], block, &out[index4(os, n, 0, 0, 0)]);
  }
  return make_result(os, std::move(out), {x}, "slice_channels",
                     [s, os, begin, block](detail::Node& self) {
                       detail::Node& in = *self.inputs[0];
                       if (!in.requires_grad) return;
                       auto& gx = in.ensure_grad();
                       for (int n = 0; n < s.n; ++n) {
                         const double* src = &self.grad[index4(os, n, 0, 0, 0)];
                         double* dst = &gx[index4(s, n, begin, 0, 0)];
                         for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
                       }
                     });
}

Tensor slice_batch(const Tensor& x, int begin, int count) {
  require_defined(x, "slice_batch");
  const Shape& s = x.shape();
  if (begin < 0 || count < 0 || begin + count > s.n) {
    throw DimensionError("slice_batch: range out of bounds for " + s.str());
  }
  const Shape os{count, s.c, s.h, s.w};
  const std::size_t offset = static_cast<std::size_t>(begin) * s.c * s.plane();
  const auto v = x.data();
  std::vector<double> out(v.begin() + offset, v.begin() + offset + os.numel());
  return make_result(os, std::move(out), {x}, "slice_batch",
                     [offset](detail::Node& self) {
                       detail::Node& in = *self.inputs[0];
                       if (!in.requires_grad) return;
                       auto& gx = in.ensure_grad();
                       for (std::size_t i = 0; i < self.grad.size(); ++i) {
                         gx[offset + i] += self.grad[i];
                       }
                     });
}

Tensor concat_batch(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_batch: empty list of tensors");
  const Shape& first = parts.front().shape();
  int batch = 0;
  for (const Tensor& t : parts) {
    const Shape& s = t.shape();
    if (s.c != first.c || s.h != first.h || s.w != first.w) {
      throw DimensionError("concat_batch: shape mismatch " + first.str() +
                           " vs " + s.str());
    }
    batch += s.n;
  }
  const Shape os{batch, first.c, first.h, first.w};
  std::vector<double> out;
  out.reserve(os.numel());
  for (const Tensor& t : parts) {
    const auto v = t.data();
    out.insert(out.end(), v.begin(), v.end());
  }
  return make_result(os, std::move(out),
                     std::vector<Tensor>(parts.begin(), parts.end()),
                     "concat_batch", [](detail::Node& self) {
                       std::size_t offset = 0;
                       for (auto& in : self.inputs) {
                         const std::size_t len = in->value.size();
                         if (in->requires_grad) {
                           auto& gx = in->ensure_grad();
                           for (std::size_t i = 0; i < len; ++i) {
                             gx[i] += self.grad[offset + i];
                           }
                         }
                         offset += len;
                       }
                     });
}

namespace {

struct LinearTap {
  int i0;
  int i1;
  double frac;
};

std::vector<LinearTap> bilinear_taps(int in_extent, int out_extent) {
  std::vector<LinearTap> taps(out_extent);
  const double ratio = static_cast<double>(in_extent) / out_extent;
  for (int o = 0; o < out_extent; ++o) {
    double src = (o + 0.5) * ratio - 0.5;
    if (src < 0.0) src = 0.0;
    int i0 = static_cast<int>(std::floor(src));
    if (i0 > in_extent - 1) i0 = in_extent - 1;
    const int i1 = std::min(i0 + 1, in_extent - 1);
    taps[o] = {i0, i1, src - i0};
  }
  return taps;
}

}  // namespace

Tensor resize_bilinear(const Tensor& x, int out_h, int out_w) {
  require_defined(x, "resize_bilinear");
  const Shape& s = x.shape();
  if (out_h < 1 || out_w < 1 || s.h < 1 || s.w < 1) {
    throw DimensionError("resize_bilinear: empty extent, input " + s.str());
  }
  const Shape os{s.n, s.c, out_h, out_w};
  const auto ty = bilinear_taps(s.h, out_h);
  const auto tx = bilinear_taps(s.w, out_w);
  const auto v = x.data();
  std::vector<double> out(os.numel());
  const int planes = s.n * s.c;
  for (int p = 0; p < planes; ++p) {
    const double* src = &v[static_cast<std::size_t>(p) * s.plane()];
    double* dst = &out[static_cast<std::size_t>(p) * os.plane()];
    for (int oy = 0; oy < out_h; ++oy) {
      const LinearTap& a = ty[oy];
      for (int ox = 0; ox < out_w; ++ox) {
        const LinearTap& b = tx[ox];
        const double top = (1.0 - b.frac) * src[a.i0 * s.w + b.i0] +
                           b.frac * src[a.i0 * s.w + b.i1];
        const double bottom = (1.0 - b.frac) * src[a.i1 * s.w + b.i0] +
                              b.frac * src[a.i1 * s.w + b.i1];
        dst[oy * out_w + ox] = (1.0 - a.frac) * top + a.frac * bottom;
      }
    }
  }
  return make_result(
      os, std::move(out), {x}, "resize_bilinear",
      [s, os, planes, ty, tx](detail::Node& self) {
        detail::Node& in = *self.inputs[0];
        if (!in.requires_grad) return;
        auto& gx = in.ensure_grad();
        for (int p = 0; p < planes; ++p) {
          const double* g = &self.grad[static_cast<std::size_t>(p) * os.plane()];
          double* dst = &gx[static_cast<std::size_t>(p) * s.plane()];
          for (int oy = 0; oy < os.h; ++oy) {
            const LinearTap& a = ty[oy];
            for (int ox = 0; ox < os.w; ++ox) {
              const LinearTap& b = tx[ox];
              const double gv = g[oy * os.w + ox];
              dst[a.i0 * s.w + b.i0] += (1.0 - a.frac) * (1.0 - b.frac) * gv;
              dst[a.i0 * s.w + b.i1] += (1.0 - a.frac) * b.frac * gv;
              dst[a.i1 * s.w + b.i0] += a.frac * (1.0 - b.frac) * gv;
              dst[a.i1 * s.w + b.i1] += a.frac * b.frac * gv;
            }
          }
        }
      });
}

Tensor upsample_bilinear_2x(const Tensor& x) {
  return resize_bilinear(x, x.shape().h * 2, x.shape().w * 2);
}

Tensor downsample_avg_2x(const Tensor& x) {
  require_defined(x, "downsample_avg_2x");
  const Shape& s = x.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) {
    throw PreconditionError("downsample_avg_2x: odd spatial extent in " +
                            s.str());
  }
  const Shape os{s.n, s.c, s.h / 2, s.w / 2};
  const auto v = x.data();
  std::vector<double> out(os.numel());
  const int planes = s.n * s.c;
  for (int p = 0; p < planes; ++p) {
    const double* src = &v[static_cast<std::size_t>(p) * s.plane()];
    double* dst = &out[static_cast<std::size_t>(p) * os.plane()];
    for (int y = 0; y < os.h; ++y) {
      for (int xx = 0; xx < os.w; ++xx) {
        const double* r0 = src + (2 * y) * s.w + 2 * xx;
        const double* r1 = r0 + s.w;
        dst[y * os.w + xx] = 0.25 * (r0[0] + r0[1] + r1[0] + r1[1]);
      }
    }
  }
  return make_result(os, std::move(out), {x}, "downsample_avg_2x",
                     [s, os, planes](detail::Node& self) {
                       detail::Node& in = *self.inputs[0];
                       if (!in.requires_grad) return;
                       auto& gx = in.ensure_grad();
                       for (int p = 0; p < planes; ++p) {
                         const double* g = &self.grad[static_cast<std::size_t>(p) * os.plane()];
                         double* dst = &gx[static_cast<std::size_t>(p) * s.plane()];
                         for (int y = 0; y < os.h; ++y) {
                           for (int xx = 0; xx < os.w; ++xx) {
                             const double q = 0.25 * g[y * os.w + xx];
                             double* r0 = dst + (2 * y) * s.w + 2 * xx;
                             r0[0] += q;
                             r0[1] += q;
                             r0[s.w] += q;
                             r0[s.w + 1] += q;
                           }
                         }
                       }
                     });
}

Tensor maxpool_2x(const Tensor& x) {
  require_defined(x, "maxpool_2x");
  const Shape& s = x.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) {
    throw PreconditionError("maxpool_2x: odd spatial extent in " + s.str());
  }
  const Shape os{s.n, s.c, s.h / 2, s.w / 2};
  const auto v = x.data();
  std::vector<double> out(os.numel());
  std::vector<std::size_t> argmax(os.numel());
  const int planes = s.n * s.c;
  for (int p = 0; p < planes; ++p) {
    const std::size_t base = static_cast<std::size_t>(p) * s.plane();
    for (int y = 0; y < os.h; ++y) {
      for (int xx = 0; xx < os.w; ++xx) {
        const std::size_t cand[4] = {
            base + (2 * y) * s.w + 2 * xx, base + (2 * y) * s.w + 2 * xx + 1,
            base + (2 * y + 1) * s.w + 2 * xx,
            base + (2 * y + 1) * s.w + 2 * xx + 1};
        std::size_t best = cand[0];
        for (int i = 1; i < 4; ++i) {
          if (v[cand[i]] > v[best]) best = cand[i];
        }
        const std::size_t o = static_cast<std::size_t>(p) * os.plane() + y * os.w + xx;
        out[o] = v[best];
        argmax[o] = best;
      }
    }
  }
  return make_result(os, std::move(out), {x}, "maxpool_2x",
                     [argmax = std::move(argmax)](detail::Node& self) {
                       detail::Node& in = *self.inputs[0];
                       if (!in.requires_grad) return;
                       auto& gx = in.ensure_grad();
                       for (std::size_t i = 0; i < argmax.size(); ++i) {
                         gx[argmax[i]] += self.grad[i];
                       }
                     });
}

Tensor sum(const Tensor& x) {
  require_defined(x, "sum");
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return make_result({1, 1, 1, 1}, {acc}, {x}, "sum", [](detail::Node& self) {
    detail::Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto& gx = in.ensure_grad();
    const double g = self.grad[0];
    for (double& v : gx) v += g;
  });
}

Tensor dot_const(const Tensor& x, const Tensor& weights) {
  require_defined(x, "dot_const");
  require_defined(weights, "dot_const");
  require_same_shape(x, weights, "dot_const");
  const auto xv = x.data();
  const auto wv = weights.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) acc += xv[i] * wv[i];
  std::vector<double> w(wv.begin(), wv.end());
  return make_result({1, 1, 1, 1}, {acc}, {x}, "dot_const",
                     [w = std::move(w)](detail::Node& self) {
                       detail::Node& in = *self.inputs[0];
                       if (!in.requires_grad) return;
                       auto& gx = in.ensure_grad();
                       const double g = self.grad[0];
                       for (std::size_t i = 0; i < gx.size(); ++i) {
                         gx[i] += g * w[i];
                       }
                     });
}

}  // namespace spnet
