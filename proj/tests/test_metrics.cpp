#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "metric_oracle.hpp"
#include "spnet/metrics.hpp"

using namespace spnet;
using namespace spnet::metrics;

namespace {

EvalPair pair_of(GrayMap pred, GrayMap gt) {
  return make_eval_pair(std::move(pred), std::move(gt));
}

EvalPair self_pair(const GrayMap& gt) { return pair_of(gt, gt); }

// Structured instances shared with the reference structure-measure values.
EvalPair structured_instance(int k) {
  const int h = 6, w = 7;
  GrayMap pred(h, w), gt(h, w);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) pred.at(i, j) = ((i * 7 + j * 3 + k * 5) % 11) / 10.0;
  }
  const auto fill = [&](int y0, int y1, int x0, int x1) {
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) gt.at(y, x) = 1.0;
    }
  };
  if (k == 0) fill(1, 4, 2, 6);
  if (k == 1) {
    fill(0, 2, 0, 3);
    fill(4, 5, 5, 6);
  }
  if (k == 2) {
    fill(2, 6, 1, 3);
    fill(0, 1, 6, 7);
  }
  return pair_of(pred, gt);
}

}  // namespace

TEST_CASE("MAE examples and symmetry") {
  const GrayMap gt(2, 2, std::vector<double>{0, 1, 0, 1});
  CHECK(mae(pair_of(gt, gt)) == 0.0);
  CHECK(mae(pair_of(GrayMap(3, 3, 0.5), GrayMap(3, 3, 0.0))) == 0.5);
  const GrayMap pred(2, 2, std::vector<double>{0.2, 0.8, 0.0, 1.0});
  CHECK(std::fabs(mae(pair_of(pred, gt)) - 0.1) < 1e-12);

  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const GrayMap p = oracle::uniform_map(rng, 5, 4);
    const GrayMap g = oracle::binary_map(rng, 5, 4);
    GrayMap pi = p, gi = g;
    for (double& v : pi.values) v = 1.0 - v;
    for (double& v : gi.values) v = 1.0 - v;
    CHECK(std::fabs(mae(pair_of(p, g)) - mae(pair_of(pi, gi))) < 1e-12);
  }
}

TEST_CASE("threshold levels snap exact multiples of 1/255") {
  for (int k = 0; k < 256; ++k) CHECK(threshold_level(k / 255.0) == k);
  CHECK(threshold_level(0.0) == 0);
  CHECK(threshold_level(1.0) == 255);
  CHECK(threshold_level(0.5) == 127);
  CHECK(threshold_level(0.25) == 63);
}

TEST_CASE("PR curve examples") {
  std::mt19937_64 rng(2);
  const GrayMap gt = oracle::mixed_mask(rng, 5, 6);
  const PRCurve pr = pr_curve(self_pair(gt));
  double fg = 0.0;
  for (double v : gt.values) fg += v;
  CHECK(pr.precision[0] == fg / 30.0);
  CHECK(pr.recall[0] == 1.0);
  for (int t = 1; t < kThresholds; ++t) {
    CHECK(pr.precision[t] == 1.0);
    CHECK(pr.recall[t] == 1.0);
  }
  const PRCurve zero = pr_curve(pair_of(GrayMap(5, 6, 0.0), gt));
  for (int t = 1; t < kThresholds; ++t) {
    CHECK(zero.recall[t] == 0.0);
    CHECK(zero.precision[t] == 0.0);
  }
  CHECK_THROWS_AS(pr_curve(pair_of(GrayMap(2, 2, 0.3), GrayMap(2, 2, 0.0))),
                  EmptyGroundTruthError);
}

TEST_CASE("exhaustive 2x2 quantized grids agree with enumeration") {
  const double grid[5] = {0.0, 0.25, 0.5, 0.75, 1.0};
  std::size_t cases = 0;
  for (int gmask = 1; gmask < 15; ++gmask) {
    std::vector<double> g(4);
    for (int i = 0; i < 4; ++i) g[i] = (gmask >> i) & 1;
    for (int code = 0; code < 625; ++code) {
      std::vector<double> p(4);
      int c = code;
      for (int i = 0; i < 4; ++i, c /= 5) p[i] = grid[c % 5];
      const EvalPair pair = pair_of(GrayMap(2, 2, p), GrayMap(2, 2, g));
      const PRCurve pr = pr_curve(pair);
      const auto want = oracle::brute_pr(p, g);
      bool same = true;
      for (int t = 0; t < kThresholds; ++t) {
        same = same && pr.precision[t] == want[t].precision && pr.recall[t] == want[t].recall;
      }
      CHECK(same);
      CHECK(f_measure_max(pair) == oracle::brute_f_max(p, g, 0.3));
      double hand = 0.0;
      for (int i = 0; i < 4; ++i) hand += std::fabs(p[i] - g[i]);
      CHECK(std::fabs(mae(pair) - hand / 4.0) <= 1e-12);
      ++cases;
    }
  }
  CHECK(cases == 14 * 625);
}

TEST_CASE("random continuous maps agree with enumeration") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const int side = trial % 2 ? 3 : 4;
    const GrayMap p = oracle::uniform_map(rng, side, side);
    const GrayMap g = oracle::mixed_mask(rng, side, side);
    const EvalPair pair = pair_of(p, g);
    const PRCurve pr = pr_curve(pair);
    const auto want = oracle::brute_pr(p.values, g.values);
    for (int t = 0; t < kThresholds; ++t) {
      CHECK(pr.precision[t] == want[t].precision);
      CHECK(pr.recall[t] == want[t].recall);
    }
    const FMeasure f = f_measure(pair);
    CHECK(f.max == oracle::brute_f_max(p.values, g.values, 0.3));
    CHECK(f.max == *std::max_element(f.curve.begin(), f.curve.end()));
  }
}

TEST_CASE("recall is non-increasing in the threshold") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const PRCurve pr = pr_curve(pair_of(oracle::uniform_map(rng, 8, 8),
                                        oracle::mixed_mask(rng, 8, 8)));
    for (int t = 1; t < kThresholds; ++t) CHECK(pr.recall[t] <= pr.recall[t - 1]);
  }
}

TEST_CASE("F-measure examples and the beta constant") {
  CHECK(kBetaSquared == 0.3);
  // P = 0.5, R = 1: 1.3 * 0.5 / (0.15 + 1).
  CHECK(f_beta(0.5, 1.0) == doctest::Approx(0.65 / 1.15).epsilon(1e-15));
  CHECK(f_beta(0.0, 0.0) == 0.0);
  std::mt19937_64 rng(5);
  const GrayMap gt = oracle::mixed_mask(rng, 6, 6);
  CHECK(f_measure_max(self_pair(gt)) == 1.0);
  // A zero map is selected only by the all-foreground threshold t = 0.
  const FMeasure zero = f_measure(pair_of(GrayMap(6, 6, 0.0), gt));
  for (int t = 1; t < kThresholds; ++t) CHECK(zero.curve[t] == 0.0);
  double fg = 0.0;
  for (double v : gt.values) fg += v;
  CHECK(zero.max == f_beta(fg / 36.0, 1.0));

  // Thresholds trade precision (P = 1, R = 1/2) against recall
  // (P = 2/3, R = 1); beta decides which one wins.
  const GrayMap g(1, 4, std::vector<double>{1, 1, 0, 0});
  const GrayMap p(1, 4, std::vector<double>{0.9, 0.3, 0.5, 0.0});
  const EvalPair pair = pair_of(p, g);
  CHECK(f_measure_max(pair) == f_measure_max(pair, 0.3));
  CHECK(f_measure_max(pair) == doctest::Approx(0.65 / 0.8).epsilon(1e-15));
  CHECK(f_measure_max(pair, 1.0) == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("S-measure degenerate ground truth") {
  for (double p : {0.0, 0.2, 0.7, 1.0}) {
    CHECK(s_measure(pair_of(GrayMap(4, 5, p), GrayMap(4, 5, 0.0))) ==
          doctest::Approx(1.0 - p).epsilon(1e-15));
    CHECK(s_measure(pair_of(GrayMap(4, 5, p), GrayMap(4, 5, 1.0))) ==
          doctest::Approx(p).epsilon(1e-15));
  }
}

TEST_CASE("S-measure matches the reference structure-measure values") {
  struct Ref {
    double s, object, region;
  };
  const Ref refs[3] = {
      {0.25043975691832104, 0.5997577767135406, -0.09887826287689849},
      {0.3120943941434992, 0.6284832021157266, -0.004294413828728236},
      {0.3123675789219288, 0.6220490475027856, 0.002686110341071992},
  };
  for (int k = 0; k < 3; ++k) {
    const EvalPair pair = structured_instance(k);
    CHECK(std::fabs(s_object(pair) - refs[k].object) < 1e-12);
    CHECK(std::fabs(s_region(pair) - refs[k].region) < 1e-12);
    CHECK(std::fabs(s_measure(pair) - refs[k].s) < 1e-12);
  }
}

TEST_CASE("alpha constant weighs object and region terms") {
  CHECK(kAlpha == 0.5);
  const EvalPair pair = structured_instance(2);
  const double s = s_measure(pair);
  CHECK(s == s_measure(pair, 0.5));
  CHECK(s == doctest::Approx(0.5 * s_object(pair) + 0.5 * s_region(pair)).epsilon(1e-15));
  CHECK(s != s_measure(pair, 0.7));
}

TEST_CASE("E-measure matches a scalar oracle of the alignment formula") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 40; ++trial) {
    const GrayMap p = oracle::uniform_map(rng, 4, 4);
    const GrayMap g = trial % 10 == 0 ? GrayMap(4, 4, trial % 20 == 0 ? 0.0 : 1.0)
                                      : oracle::mixed_mask(rng, 4, 4);
    const EMeasure e = e_measure(pair_of(p, g));
    double best = 0.0, sum = 0.0;
    for (int t = 0; t < kThresholds; ++t) {
      const double want = oracle::brute_alignment(p.values, g.values, t);
      CHECK(std::fabs(e.curve[t] - want) < 1e-12);
      best = std::max(best, want);
      sum += want;
    }
    CHECK(std::fabs(e.max - best) < 1e-12);
    CHECK(std::fabs(e.mean - sum / kThresholds) < 1e-12);
  }
}

TEST_CASE("E-measure of the inverted mask is zero at interior thresholds") {
  std::mt19937_64 rng(7);
  const GrayMap gt = oracle::mixed_mask(rng, 6, 6);
  GrayMap inv = gt;
  for (double& v : inv.values) v = 1.0 - v;
  const EMeasure e = e_measure(pair_of(inv, gt));
  for (int t = 1; t < kThresholds; ++t) CHECK(e.curve[t] < 1e-9);
  CHECK(e_measure_max(self_pair(gt)) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("perfect prediction fixed point on 50 masks") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const GrayMap gt = oracle::mixed_mask(rng, 5 + trial % 7, 4 + trial % 5);
    const EvalPair pair = self_pair(gt);
    CHECK(std::fabs(s_measure(pair) - 1.0) < 1e-9);
    CHECK(std::fabs(f_measure_max(pair) - 1.0) < 1e-9);
    CHECK(std::fabs(e_measure_max(pair) - 1.0) < 1e-9);
    CHECK(mae(pair) == 0.0);
  }
}

TEST_CASE("all measures stay in the unit interval") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 60; ++trial) {
    const GrayMap p = oracle::uniform_map(rng, 7, 5);
    const GrayMap g = oracle::binary_map(rng, 7, 5, 0.05 * (trial % 20));
    const ImageMetrics m = evaluate_pair("x", pair_of(p, g));
    for (double v : {m.s_measure, m.e_max, m.e_mean, m.mae}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    if (m.f_max) {
      CHECK(*m.f_max >= 0.0);
      CHECK(*m.f_max <= 1.0);
    }
  }
}

TEST_CASE("eval pair construction") {
  GrayMap gt(2, 2, std::vector<double>{0.2, 0.5, 0.49, 1.0});
  const EvalPair p = pair_of(GrayMap(2, 2, 0.3), gt);
  CHECK(p.gt.values == std::vector<double>{0, 1, 0, 1});
  const EvalPair resized = pair_of(GrayMap(4, 4, 0.6), GrayMap(2, 2, 1.0));
  CHECK(resized.pred.height == 2);
  CHECK(resized.pred.width == 2);
  for (double v : resized.pred.values) CHECK(v == doctest::Approx(0.6));
  CHECK_THROWS_AS(pair_of(GrayMap(2, 2, 1.5), GrayMap(2, 2, 0.0)), std::invalid_argument);
  CHECK_THROWS_AS(pair_of(GrayMap(2, 2, 0.5), GrayMap(0, 0, 0.0)), std::invalid_argument);
}

TEST_CASE("dataset evaluation aggregates per-image values") {
  std::mt19937_64 rng(10);
  const GrayMap gt = oracle::mixed_mask(rng, 6, 6);
  const MetricsReport single = evaluate_dataset({{"a", self_pair(gt)}});
  CHECK(single.s_measure == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(single.f_max == 1.0);
  CHECK(single.e_max == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(single.mae == 0.0);

  const EvalPair other = pair_of(oracle::uniform_map(rng, 6, 6), gt);
  const MetricsReport two = evaluate_dataset({{"b", other}, {"a", self_pair(gt)}});
  CHECK(two.images[0].name == "a");
  CHECK(two.mae == doctest::Approx(0.5 * mae(other)).epsilon(1e-15));
  CHECK(two.f_max == doctest::Approx(0.5 * (1.0 + f_measure_max(other))).epsilon(1e-15));

  std::vector<NamedPair> pairs;
  for (int i = 0; i < 10; ++i) {
    pairs.push_back({"img" + std::to_string(i),
                     pair_of(oracle::uniform_map(rng, 5, 5), oracle::mixed_mask(rng, 5, 5))});
  }
  pairs.push_back({"empty", pair_of(oracle::uniform_map(rng, 5, 5), GrayMap(5, 5, 0.0))});
  const MetricsReport report = evaluate_dataset(pairs, 1);
  CHECK(report.evaluated == 10);
  CHECK(report.skipped == std::vector<std::string>{"empty"});
  double s = 0.0, f = 0.0, e = 0.0, m = 0.0;
  for (const NamedPair& p : pairs) {
    s += s_measure(p.pair);
    e += e_measure_max(p.pair);
    m += mae(p.pair);
    if (p.name != "empty") f += f_measure_max(p.pair);
  }
  CHECK(report.s_measure == doctest::Approx(s / 11).epsilon(1e-14));
  CHECK(report.e_max == doctest::Approx(e / 11).epsilon(1e-14));
  CHECK(report.mae == doctest::Approx(m / 11).epsilon(1e-14));
  CHECK(report.f_max == doctest::Approx(f / 10).epsilon(1e-14));

  // Input order and thread count leave every bit unchanged.
  std::vector<NamedPair> shuffled = pairs;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const MetricsReport again = evaluate_dataset(shuffled, 3);
  CHECK(again.s_measure == report.s_measure);
  CHECK(again.f_max == report.f_max);
  CHECK(again.e_max == report.e_max);
  CHECK(again.mae == report.mae);
  CHECK(again.pr.precision == report.pr.precision);
  CHECK(again.f_curve == report.f_curve);

  CHECK_THROWS_AS(evaluate_dataset({}), std::invalid_argument);
}
