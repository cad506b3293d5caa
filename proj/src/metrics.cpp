#include "spnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace spnet::metrics {

EvalPair make_eval_pair(GrayMap pred, GrayMap gt) {
  if (gt.height < 1 || gt.width < 1 || gt.size() != static_cast<std::size_t>(gt.height) * gt.width) {
    throw std::invalid_argument("eval pair: malformed ground truth map");
  }
  if (pred.size() != static_cast<std::size_t>(pred.height) * pred.width ||
      pred.height < 1 || pred.width < 1) {
    throw std::invalid_argument("eval pair: malformed prediction map");
  }
  for (double v : pred.values) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::invalid_argument("eval pair: prediction outside [0,1]");
    }
  }
  for (double& v : gt.values) v = v >= 0.5 ? 1.0 : 0.0;
  if (!pred.same_extent(gt)) {
    pred = resize_bilinear(pred, gt.height, gt.width);
    for (double& v : pred.values) v = std::clamp(v, 0.0, 1.0);
  }
  return {std::move(pred), std::move(gt)};
}

int threshold_level(double pred) {
  double s = pred * 255.0;
  const double r = std::round(s);
  if (std::fabs(s - r) < 1e-9) s = r;
  return std::clamp(static_cast<int>(std::floor(s)), 0, kThresholds - 1);
}

double mae(const EvalPair& pair) {
  double acc = 0.0;
  for (std::size_t i = 0; i < pair.pred.size(); ++i) {
    acc += std::fabs(pair.pred.values[i] - pair.gt.values[i]);
  }
  return acc / static_cast<double>(pair.pred.size());
}

namespace {

struct Histograms {
  std::array<std::size_t, kThresholds> fg{};
  std::array<std::size_t, kThresholds> all{};
  std::size_t gt_count = 0;
};

Histograms histograms(const EvalPair& pair) {
  Histograms h;
  for (std::size_t i = 0; i < pair.pred.size(); ++i) {
    const int level = threshold_level(pair.pred.values[i]);
    ++h.all[level];
    if (pair.gt.values[i] > 0.5) {
      ++h.fg[level];
      ++h.gt_count;
    }
  }
  return h;
}

}  // namespace

PRCurve pr_curve(const EvalPair& pair) {
  const Histograms h = histograms(pair);
  if (h.gt_count == 0) {
    throw EmptyGroundTruthError("pr_curve: ground truth has no foreground");
  }
  PRCurve curve;
  std::size_t tp = 0;
  std::size_t selected = 0;
  for (int t = kThresholds - 1; t >= 0; --t) {
    tp += h.fg[t];
    selected += h.all[t];
    curve.precision[t] =
        selected == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(selected);
    curve.recall[t] = static_cast<double>(tp) / static_cast<double>(h.gt_count);
  }
  return curve;
}

double f_beta(double precision, double recall, double beta2) {
  const double denom = beta2 * precision + recall;
  if (denom == 0.0) return 0.0;
  return (1.0 + beta2) * precision * recall / denom;
}

FMeasure f_measure(const EvalPair& pair, double beta2) {
  const PRCurve pr = pr_curve(pair);
  FMeasure f;
  for (int t = 0; t < kThresholds; ++t) {
    f.curve[t] = f_beta(pr.precision[t], pr.recall[t], beta2);
    f.max = std::max(f.max, f.curve[t]);
  }
  return f;
}

namespace {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
  std::size_t count = 0;
};

// Sample standard deviation (N - 1); zero for a single value.
MeanStd mean_std(const std::vector<double>& v) {
  MeanStd r;
  r.count = v.size();
  if (v.empty()) return r;
  double acc = 0.0;
  for (double x : v) acc += x;
  r.mean = acc / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return r;
}

double object_score(const std::vector<double>& values) {
  const MeanStd ms = mean_std(values);
  return 2.0 * ms.mean / (ms.mean * ms.mean + 1.0 + ms.std + kEps);
}

struct Block {
  int y0, y1, x0, x1;
  std::size_t area() const {
    return static_cast<std::size_t>(std::max(0, y1 - y0)) * std::max(0, x1 - x0);
  }
};

double block_ssim(const EvalPair& pair, const Block& b) {
  const double n = static_cast<double>(b.area());
  double x_mean = 0.0, y_mean = 0.0;
  for (int y = b.y0; y < b.y1; ++y) {
    for (int x = b.x0; x < b.x1; ++x) {
      x_mean += pair.pred.at(y, x);
      y_mean += pair.gt.at(y, x);
    }
  }
  x_mean /= n;
  y_mean /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (int y = b.y0; y < b.y1; ++y) {
    for (int x = b.x0; x < b.x1; ++x) {
      const double dx = pair.pred.at(y, x) - x_mean;
      const double dy = pair.gt.at(y, x) - y_mean;
      sxx += dx * dx;
      syy += dy * dy;
      sxy += dx * dy;
    }
  }
  const double denom = n - 1.0 + kEps;
  sxx /= denom;
  syy /= denom;
  sxy /= denom;
  const double alpha = 4.0 * x_mean * y_mean * sxy;
  const double beta = (x_mean * x_mean + y_mean * y_mean) * (sxx + syy);
  if (alpha != 0.0) return alpha / (beta + kEps);
  if (beta == 0.0) return 1.0;
  return 0.0;
}

}  // namespace

double s_object(const EvalPair& pair) {
  std::vector<double> fg, bg;
  for (std::size_t i = 0; i < pair.pred.size(); ++i) {
    if (pair.gt.values[i] > 0.5) {
      fg.push_back(pair.pred.values[i]);
    } else {
      bg.push_back(1.0 - pair.pred.values[i]);
    }
  }
  const double u = static_cast<double>(fg.size()) / static_cast<double>(pair.gt.size());
  return u * object_score(fg) + (1.0 - u) * object_score(bg);
}

double s_region(const EvalPair& pair) {
  const int h = pair.gt.height;
  const int w = pair.gt.width;
  double total = 0.0, sx = 0.0, sy = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double g = pair.gt.at(y, x);
      total += g;
      sx += g * (x + 1);
      sy += g * (y + 1);
    }
  }
  // 1-based centroid, rounded half away from zero.
  int cx, cy;
  if (total == 0.0) {
    cx = static_cast<int>(std::round(w / 2.0));
    cy = static_cast<int>(std::round(h / 2.0));
  } else {
    cx = static_cast<int>(std::round(sx / total));
    cy = static_cast<int>(std::round(sy / total));
  }
  const double area = static_cast<double>(w) * h;
  const Block blocks[4] = {{0, cy, 0, cx}, {0, cy, cx, w}, {cy, h, 0, cx}, {cy, h, cx, w}};
  double weights[4];
  weights[0] = static_cast<double>(cx) * cy / area;
  weights[1] = static_cast<double>(w - cx) * cy / area;
  weights[2] = static_cast<double>(cx) * (h - cy) / area;
  weights[3] = 1.0 - weights[0] - weights[1] - weights[2];
  double q = 0.0;
  for (int i = 0; i < 4; ++i) {
    if (blocks[i].area() == 0) continue;
    q += weights[i] * block_ssim(pair, blocks[i]);
  }
  return q;
}

double s_measure(const EvalPair& pair, double alpha) {
  double fg = 0.0;
  for (double g : pair.gt.values) fg += g;
  const double mean_gt = fg / static_cast<double>(pair.gt.size());
  double mean_pred = 0.0;
  for (double p : pair.pred.values) mean_pred += p;
  mean_pred /= static_cast<double>(pair.pred.size());
  double q;
  if (mean_gt == 0.0) {
    q = 1.0 - mean_pred;
  } else if (mean_gt == 1.0) {
    q = mean_pred;
  } else {
    q = alpha * s_object(pair) + (1.0 - alpha) * s_region(pair);
  }
  return std::clamp(q, 0.0, 1.0);
}

double enhanced_alignment(const std::vector<unsigned char>& binary,
                          const std::vector<unsigned char>& gt) {
  if (binary.size() != gt.size() || gt.empty()) {
    throw std::invalid_argument("enhanced_alignment: size mismatch");
  }
  // Counts of (gt, map) combinations: [g][m].
  std::size_t counts[2][2] = {{0, 0}, {0, 0}};
  for (std::size_t i = 0; i < gt.size(); ++i) ++counts[gt[i] ? 1 : 0][binary[i] ? 1 : 0];
  const double n = static_cast<double>(gt.size());
  const std::size_t g_fg = counts[1][0] + counts[1][1];
  const std::size_t m_fg = counts[0][1] + counts[1][1];
  const bool g_const = g_fg == 0 || g_fg == gt.size();
  const bool m_const = m_fg == 0 || m_fg == gt.size();
  if (g_const || m_const) {
    const double mismatch = static_cast<double>(counts[1][0] + counts[0][1]);
    return 1.0 - mismatch / n;
  }
  const double mu_g = static_cast<double>(g_fg) / n;
  const double mu_m = static_cast<double>(m_fg) / n;
  double acc = 0.0;
  for (int g = 0; g < 2; ++g) {
    for (int m = 0; m < 2; ++m) {
      if (counts[g][m] == 0) continue;
      const double a = g - mu_g;
      const double b = m - mu_m;
      const double align = 2.0 * a * b / (a * a + b * b + kEps);
      const double enhanced = (align + 1.0) * (align + 1.0) / 4.0;
      acc += static_cast<double>(counts[g][m]) * enhanced;
    }
  }
  return acc / n;
}

EMeasure e_measure(const EvalPair& pair) {
  const std::size_t n = pair.pred.size();
  std::vector<int> levels(n);
  std::vector<unsigned char> gt(n);
  for (std::size_t i = 0; i < n; ++i) {
    levels[i] = threshold_level(pair.pred.values[i]);
    gt[i] = pair.gt.values[i] > 0.5 ? 1 : 0;
  }
  EMeasure e;
  std::vector<unsigned char> binary(n);
  double acc = 0.0;
  for (int t = 0; t < kThresholds; ++t) {
    for (std::size_t i = 0; i < n; ++i) binary[i] = levels[i] >= t ? 1 : 0;
    e.curve[t] = enhanced_alignment(binary, gt);
    e.max = std::max(e.max, e.curve[t]);
    acc += e.curve[t];
  }
  e.mean = acc / kThresholds;
  return e;
}

ImageMetrics evaluate_pair(const std::string& name, const EvalPair& pair) {
  ImageMetrics m;
  m.name = name;
  m.mae = mae(pair);
  m.s_measure = s_measure(pair);
  const EMeasure e = e_measure(pair);
  m.e_max = e.max;
  m.e_mean = e.mean;
  m.e_curve = e.curve;
  bool has_fg = false;
  for (double g : pair.gt.values) has_fg = has_fg || g > 0.5;
  if (has_fg) {
    m.pr = pr_curve(pair);
    FMeasure f;
    for (int t = 0; t < kThresholds; ++t) {
      f.curve[t] = f_beta(m.pr->precision[t], m.pr->recall[t]);
      f.max = std::max(f.max, f.curve[t]);
    }
    m.f_max = f.max;
    m.f_curve = f.curve;
  }
  return m;
}

MetricsReport evaluate_dataset(std::vector<NamedPair> pairs, int threads) {
  if (pairs.empty()) {
    throw std::invalid_argument("evaluate_dataset: no pairs to evaluate");
  }
  std::sort(pairs.begin(), pairs.end(),
            [](const NamedPair& a, const NamedPair& b) { return a.name < b.name; });
  MetricsReport report;
  report.images.resize(pairs.size());
  const std::size_t workers =
      std::clamp<std::size_t>(threads < 1 ? 1 : threads, 1, pairs.size());
  if (workers == 1) {
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      report.images[i] = evaluate_pair(pairs[i].name, pairs[i].pair);
    }
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < pairs.size(); i += workers) {
          report.images[i] = evaluate_pair(pairs[i].name, pairs[i].pair);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  const double count = static_cast<double>(report.images.size());
  for (const ImageMetrics& m : report.images) {
    report.s_measure += m.s_measure;
    report.e_max += m.e_max;
    report.e_mean += m.e_mean;
    report.mae += m.mae;
    for (int t = 0; t < kThresholds; ++t) report.e_curve[t] += m.e_curve[t];
    if (!m.f_max) {
      report.skipped.push_back(m.name);
      continue;
    }
    ++report.evaluated;
    report.f_max += *m.f_max;
    for (int t = 0; t < kThresholds; ++t) {
      report.pr.precision[t] += m.pr->precision[t];
      report.pr.recall[t] += m.pr->recall[t];
      report.f_curve[t] += (*m.f_curve)[t];
    }
  }
  report.s_measure /= count;
  report.e_max /= count;
  report.e_mean /= count;
  report.mae /= count;
  for (double& v : report.e_curve) v /= count;
  if (report.evaluated > 0) {
    const double fcount = static_cast<double>(report.evaluated);
    report.f_max /= fcount;
    for (int t = 0; t < kThresholds; ++t) {
      report.pr.precision[t] /= fcount;
      report.pr.recall[t] /= fcount;
      report.f_curve[t] /= fcount;
    }
  }
  return report;
}

}  // namespace spnet::metrics
