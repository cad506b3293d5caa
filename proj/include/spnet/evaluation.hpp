#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "spnet/attributes.hpp"
#include "spnet/metrics.hpp"

namespace spnet {

/// PNG files of two directories matched by file stem, in sorted stem order.
struct StemPairing {
  std::vector<std::string> stems;
  std::vector<std::filesystem::path> pred;
  std::vector<std::filesystem::path> gt;
  std::vector<std::filesystem::path> unpaired;  // present on one side only
};

StemPairing pair_by_stem(const std::filesystem::path& pred_dir,
                         const std::filesystem::path& gt_dir);

/// Loads every pair. Throws ValidationError listing the unpaired files when
/// the directories do not match, or when nothing is paired. Loader warnings
/// (color inputs averaged to gray) are appended to `warnings`.
std::vector<metrics::NamedPair> load_eval_pairs(const std::filesystem::path& pred_dir,
                                                const std::filesystem::path& gt_dir,
                                                std::vector<std::string>* warnings = nullptr);

enum class EVariant { kMax, kMean };
EVariant parse_e_variant(const std::string& text);

/// Per-image array plus an aggregate object.
nlohmann::json report_json(const metrics::MetricsReport& report, EVariant e_variant);
/// name,s_measure,f_max,e_measure,mae; the aggregate row ("mean") comes last.
std::string report_csv(const metrics::MetricsReport& report, EVariant e_variant);
/// threshold,precision,recall over the 256 thresholds.
std::string pr_curve_csv(const metrics::MetricsReport& report);
/// threshold,f_measure over the 256 thresholds.
std::string f_curve_csv(const metrics::MetricsReport& report);

struct AttributeRecord {
  std::string id;
  int object_count = 0;
  double scale_ratio = 0.0;
  ScaleBin scale_bin = ScaleBin::kSmall;
  std::map<std::string, std::string> labels;  // sidecar columns
};

AttributeRecord attribute_record(const std::string& id, const GrayMap& gt);

/// "none", "single" or "multiple".
std::string count_group(int object_count);

/// CSV with a header row whose first column is the stem; every other column
/// is a label key. Values are kept verbatim.
using Sidecar = std::map<std::string, std::map<std::string, std::string>>;
Sidecar load_sidecar(const std::filesystem::path& path);

struct AttributeGroup {
  std::string label;
  std::vector<std::string> members;
  metrics::MetricsReport report;
};

struct AttributeEvaluation {
  std::string attribute;
  std::vector<AttributeRecord> records;
  std::vector<AttributeGroup> groups;  // sorted by label
  std::vector<std::string> notes;      // omitted empty groups
};

/// Partitions the pairs by "count", "scale" or a sidecar key and evaluates
/// each non-empty group.
AttributeEvaluation attribute_evaluation(const std::vector<metrics::NamedPair>& pairs,
                                         const std::string& attribute,
                                         const Sidecar* sidecar = nullptr, int threads = 1);

nlohmann::json attribute_json(const AttributeEvaluation& result, EVariant e_variant);
/// group,images,s_measure,f_max,e_measure,mae
std::string attribute_csv(const AttributeEvaluation& result, EVariant e_variant);

}  // namespace spnet
