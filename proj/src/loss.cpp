#include "spnet/loss.hpp"

#include <algorithm>
#include <cmath>

namespace spnet {

namespace {

void require_binary_map(const Tensor& logits, const Tensor& gt) {
  if (logits.shape() != gt.shape()) {
    throw DimensionError("ppa_loss: logits " + logits.shape().str() +
                         " vs gt " + gt.shape().str());
  }
  if (logits.shape().c != 1) {
    throw DimensionError("ppa_loss: expected single-channel maps, got " +
                         logits.shape().str());
  }
  for (double v : gt.data()) {
    if (v != 0.0 && v != 1.0) {
      throw PreconditionError("ppa_loss: ground truth must be binary");
    }
  }
}

}  // namespace

std::vector<double> boundary_weights(const Tensor& gt, const LossConfig& cfg) {
  cfg.validate();
  const Shape& s = gt.shape();
  const int r = cfg.edge_window / 2;
  const auto g = gt.data();
  std::vector<double> weights(g.size());
  const int planes = s.n * s.c;
  // Summed-area table with a zero border row/column.
  std::vector<double> integral(static_cast<std::size_t>(s.h + 1) * (s.w + 1));
  const int iw = s.w + 1;
  for (int p = 0; p < planes; ++p) {
    const double* src = &g[static_cast<std::size_t>(p) * s.plane()];
    std::fill(integral.begin(), integral.end(), 0.0);
    for (int y = 0; y < s.h; ++y) {
      double row = 0.0;
      for (int x = 0; x < s.w; ++x) {
        row += src[y * s.w + x];
        integral[(y + 1) * iw + x + 1] = integral[y * iw + x + 1] + row;
      }
    }
    double* dst = &weights[static_cast<std::size_t>(p) * s.plane()];
    for (int y = 0; y < s.h; ++y) {
      const int y0 = std::max(0, y - r);
      const int y1 = std::min(s.h, y + r + 1);
      for (int x = 0; x < s.w; ++x) {
        const int x0 = std::max(0, x - r);
        const int x1 = std::min(s.w, x + r + 1);
        const double box = integral[y1 * iw + x1] - integral[y0 * iw + x1] -
                           integral[y1 * iw + x0] + integral[y0 * iw + x0];
        const double mean = box / static_cast<double>((y1 - y0) * (x1 - x0));
        dst[y * s.w + x] =
            1.0 + cfg.edge_weight_gain * std::fabs(mean - src[y * s.w + x]);
      }
    }
  }
  return weights;
}

Tensor ppa_loss(const Tensor& logits, const Tensor& gt, const LossConfig& cfg) {
  require_binary_map(logits, gt);
  const Shape& s = logits.shape();
  const auto x = logits.data();
  const auto g = gt.data();
  std::vector<double> w = boundary_weights(gt, cfg);
  const double smooth = cfg.iou_smoothing;
  const std::size_t plane = s.plane();

  std::vector<double> prob(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    prob[i] = x[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-x[i]))
                          : std::exp(x[i]) / (1.0 + std::exp(x[i]));
  }

  struct SampleTerms {
    double weight_sum;
    double inter;
    double uni;
  };
  std::vector<SampleTerms> terms(s.n);
  double total = 0.0;
  for (int n = 0; n < s.n; ++n) {
    double wsum = 0.0, bce = 0.0, inter = 0.0, weighted_pg = 0.0;
    for (std::size_t k = 0; k < plane; ++k) {
      const std::size_t i = n * plane + k;
      const double xi = x[i];
      const double gi = g[i];
      const double l = std::max(xi, 0.0) - xi * gi + std::log1p(std::exp(-std::fabs(xi)));
      wsum += w[i];
      bce += w[i] * l;
      inter += w[i] * prob[i] * gi;
      weighted_pg += w[i] * (prob[i] + gi);
    }
    const double uni = weighted_pg - inter;
    terms[n] = {wsum, inter, uni};
    total += bce / wsum + 1.0 - (inter + smooth) / (uni + smooth);
  }
  total /= s.n;

  return make_result(
      {1, 1, 1, 1}, {total}, {logits}, "ppa_loss",
      [s, plane, smooth, w = std::move(w), prob = std::move(prob),
       gv = std::vector<double>(g.begin(), g.end()),
       terms = std::move(terms)](detail::Node& self) {
        detail::Node& in = *self.inputs[0];
        if (!in.requires_grad) return;
        auto& gx = in.ensure_grad();
        const double upstream = self.grad[0] / s.n;
        for (int n = 0; n < s.n; ++n) {
          const SampleTerms& t = terms[n];
          const double a = t.inter + smooth;
          const double b = t.uni + smooth;
          for (std::size_t k = 0; k < plane; ++k) {
            const std::size_t i = n * plane + k;
            const double p = prob[i];
            const double gi = gv[i];
            const double d_bce = w[i] * (p - gi) / t.weight_sum;
            // d/dp of -(I + s)/(U + s), with dI/dp = w g, dU/dp = w (1 - g)
            const double d_ratio = (w[i] * gi * b - a * w[i] * (1.0 - gi)) / (b * b);
            const double d_iou = -d_ratio * p * (1.0 - p);
            gx[i] += upstream * (d_bce + d_iou);
          }
        }
      });
}

Tensor total_loss(const ForwardOutput& out, const Tensor& gt,
                  const LossConfig& cfg) {
  Tensor loss = ppa_loss(out.s_shared, gt, cfg);
  if (out.s_rgb) loss = add(loss, ppa_loss(*out.s_rgb, gt, cfg));
  if (out.s_depth) loss = add(loss, ppa_loss(*out.s_depth, gt, cfg));
  return loss;
}

}  // namespace spnet
