#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "spnet/gray_map.hpp"

namespace spnet::metrics {

inline constexpr int kThresholds = 256;
inline constexpr double kBetaSquared = 0.3;
inline constexpr double kAlpha = 0.5;
// Guard constant of the reference structure/alignment tooling (MATLAB eps).
inline constexpr double kEps = 2.2204e-16;

using Curve = std::array<double, kThresholds>;

class EmptyGroundTruthError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A prediction in [0,1] and a binary ground truth of equal extent.
struct EvalPair {
  GrayMap pred;
  GrayMap gt;
};

/// Validates ranges, binarizes gt at 0.5 and resizes pred to the gt extent.
EvalPair make_eval_pair(GrayMap pred, GrayMap gt);

/// Largest threshold t in [0,255] with pred * 255 >= t. Products within 1e-9
/// of an integer are snapped so that k/255 maps back to k.
int threshold_level(double pred);

double mae(const EvalPair& pair);

struct PRCurve {
  Curve precision{};
  Curve recall{};
};

/// Precision/recall for M_t = [pred*255 >= t], t = 0..255. Precision is 0
/// when M_t is empty. Throws EmptyGroundTruthError when gt has no foreground.
PRCurve pr_curve(const EvalPair& pair);

struct FMeasure {
  double max = 0.0;
  Curve curve{};
};

FMeasure f_measure(const EvalPair& pair, double beta2 = kBetaSquared);
inline double f_measure_max(const EvalPair& pair, double beta2 = kBetaSquared) {
  return f_measure(pair, beta2).max;
}
/// F from one precision/recall pair; 0 when the denominator vanishes.
double f_beta(double precision, double recall, double beta2 = kBetaSquared);

double s_measure(const EvalPair& pair, double alpha = kAlpha);
double s_object(const EvalPair& pair);
double s_region(const EvalPair& pair);

struct EMeasure {
  double max = 0.0;
  double mean = 0.0;
  Curve curve{};
};

EMeasure e_measure(const EvalPair& pair);
inline double e_measure_max(const EvalPair& pair) { return e_measure(pair).max; }

/// Enhanced alignment score of one binary foreground map against gt.
double enhanced_alignment(const std::vector<unsigned char>& binary,
                          const std::vector<unsigned char>& gt);

struct ImageMetrics {
  std::string name;
  double s_measure = 0.0;
  double e_max = 0.0;
  double e_mean = 0.0;
  double mae = 0.0;
  // Absent when the ground truth has no foreground.
  std::optional<double> f_max;
  std::optional<PRCurve> pr;
  std::optional<Curve> f_curve;
  Curve e_curve{};
};

ImageMetrics evaluate_pair(const std::string& name, const EvalPair& pair);

struct NamedPair {
  std::string name;
  EvalPair pair;
};

struct MetricsReport {
  std::vector<ImageMetrics> images;  // sorted by name
  double s_measure = 0.0;
  double f_max = 0.0;
  double e_max = 0.0;
  double e_mean = 0.0;
  double mae = 0.0;
  PRCurve pr;     // mean precision/recall per threshold
  Curve f_curve{};  // mean F per threshold
  Curve e_curve{};
  std::size_t evaluated = 0;
  std::vector<std::string> skipped;  // empty-gt images left out of F/PR
};

/// Per-image metrics and their arithmetic means. Images are processed in
/// name order; `threads` > 1 fans the per-image work out without changing
/// any result bit.
MetricsReport evaluate_dataset(std::vector<NamedPair> pairs, int threads = 1);

}  // namespace spnet::metrics
