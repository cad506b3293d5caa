#include "spnet/evaluation.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "spnet/config.hpp"
#include "spnet/image_io.hpp"
#include "spnet/training.hpp"

namespace spnet {

namespace {

std::map<std::string, std::filesystem::path> pngs_by_stem(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw ValidationError("not a directory: " + dir.string());
  }
  std::map<std::string, std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") {
      out[entry.path().stem().string()] = entry.path();
    }
  }
  return out;
}

double e_value(const metrics::ImageMetrics& m, EVariant v) {
  return v == EVariant::kMax ? m.e_max : m.e_mean;
}

double e_value(const metrics::MetricsReport& r, EVariant v) {
  return v == EVariant::kMax ? r.e_max : r.e_mean;
}

std::string e_key(EVariant v) { return v == EVariant::kMax ? "e_max" : "e_mean"; }

nlohmann::json aggregate_json(const metrics::MetricsReport& r, EVariant v) {
  return {{"images", r.images.size()},
          {"f_evaluated", r.evaluated},
          {"s_measure", r.s_measure},
          {"f_max", r.f_max},
          {e_key(v), e_value(r, v)},
          {"mae", r.mae},
          {"skipped_empty_gt", r.skipped}};
}

std::string csv_row(const std::string& name, double s, const std::string& f, double e, double mae) {
  return name + "," + format_double(s) + "," + f + "," + format_double(e) + "," +
         format_double(mae) + "\n";
}

std::vector<std::string> split_csv_line(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

StemPairing pair_by_stem(const std::filesystem::path& pred_dir,
                         const std::filesystem::path& gt_dir) {
  const auto pred = pngs_by_stem(pred_dir);
  const auto gt = pngs_by_stem(gt_dir);
  StemPairing out;
  for (const auto& [stem, path] : pred) {
    const auto it = gt.find(stem);
    if (it == gt.end()) {
      out.unpaired.push_back(path);
      continue;
    }
    out.stems.push_back(stem);
    out.pred.push_back(path);
    out.gt.push_back(it->second);
  }
  for (const auto& [stem, path] : gt) {
    if (!pred.count(stem)) out.unpaired.push_back(path);
  }
  return out;
}

std::vector<metrics::NamedPair> load_eval_pairs(const std::filesystem::path& pred_dir,
                                                const std::filesystem::path& gt_dir,
                                                std::vector<std::string>* warnings) {
  const StemPairing pairing = pair_by_stem(pred_dir, gt_dir);
  if (!pairing.unpaired.empty()) {
    std::string msg = "unpaired files (matching is by file stem):";
    for (const auto& p : pairing.unpaired) msg += "\n  " + p.string();
    throw ValidationError(msg);
  }
  if (pairing.stems.empty()) throw ValidationError("no matched prediction/ground-truth pairs");
  std::vector<metrics::NamedPair> out;
  for (std::size_t i = 0; i < pairing.stems.size(); ++i) {
    std::string warning;
    GrayMap pred = load_map(pairing.pred[i], &warning);
    if (!warning.empty() && warnings) warnings->push_back(warning);
    warning.clear();
    GrayMap gt = load_map(pairing.gt[i], &warning);
    if (!warning.empty() && warnings) warnings->push_back(warning);
    out.push_back({pairing.stems[i], metrics::make_eval_pair(std::move(pred), std::move(gt))});
  }
  return out;
}

EVariant parse_e_variant(const std::string& text) {
  if (text == "max") return EVariant::kMax;
  if (text == "mean") return EVariant::kMean;
  throw ValidationError("e-variant must be 'max' or 'mean', got '" + text + "'");
}

nlohmann::json report_json(const metrics::MetricsReport& report, EVariant e_variant) {
  nlohmann::json images = nlohmann::json::array();
  for (const auto& m : report.images) {
    images.push_back({{"name", m.name},
                      {"s_measure", m.s_measure},
                      {"f_max", m.f_max ? nlohmann::json(*m.f_max) : nlohmann::json()},
                      {e_key(e_variant), e_value(m, e_variant)},
                      {"mae", m.mae}});
  }
  return {{"e_variant", e_variant == EVariant::kMax ? "max" : "mean"},
          {"images", images},
          {"aggregate", aggregate_json(report, e_variant)}};
}

std::string report_csv(const metrics::MetricsReport& report, EVariant e_variant) {
  std::string out = "name,s_measure,f_max," + e_key(e_variant) + ",mae\n";
  for (const auto& m : report.images) {
    out += csv_row(m.name, m.s_measure, m.f_max ? format_double(*m.f_max) : "",
                   e_value(m, e_variant), m.mae);
  }
  out += csv_row("mean", report.s_measure, format_double(report.f_max), e_value(report, e_variant),
                 report.mae);
  return out;
}

std::string pr_curve_csv(const metrics::MetricsReport& report) {
  std::string out = "threshold,precision,recall\n";
  for (int t = 0; t < metrics::kThresholds; ++t) {
    out += std::to_string(t) + "," + format_double(report.pr.precision[t]) + "," +
           format_double(report.pr.recall[t]) + "\n";
  }
  return out;
}

std::string f_curve_csv(const metrics::MetricsReport& report) {
  std::string out = "threshold,f_measure\n";
  for (int t = 0; t < metrics::kThresholds; ++t) {
    out += std::to_string(t) + "," + format_double(report.f_curve[t]) + "\n";
  }
  return out;
}

AttributeRecord attribute_record(const std::string& id, const GrayMap& gt) {
  AttributeRecord r;
  r.id = id;
  r.object_count = connected_components(gt);
  const ObjectScale s = object_scale(gt);
  r.scale_ratio = s.ratio;
  r.scale_bin = s.bin;
  return r;
}

std::string count_group(int object_count) {
  if (object_count == 0) return "none";
  return object_count == 1 ? "single" : "multiple";
}

Sidecar load_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open sidecar " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("sidecar " + path.string() + " is empty");
  const std::vector<std::string> header = split_csv_line(line);
  if (header.size() < 2) {
    throw ValidationError("sidecar header needs a stem column and at least one label column");
  }
  Sidecar out;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw ValidationError("sidecar row " + std::to_string(row) + ": expected " +
                            std::to_string(header.size()) + " columns");
    }
    auto& labels = out[cells[0]];
    for (std::size_t c = 1; c < cells.size(); ++c) labels[header[c]] = cells[c];
  }
  return out;
}

AttributeEvaluation attribute_evaluation(const std::vector<metrics::NamedPair>& pairs,
                                         const std::string& attribute, const Sidecar* sidecar,
                                         int threads) {
  if (pairs.empty()) throw ValidationError("attribute evaluation: no matched pairs");
  AttributeEvaluation result;
  result.attribute = attribute;
  std::set<std::string> expected;
  if (attribute == "count") {
    expected = {"single", "multiple"};
  } else if (attribute == "scale") {
    expected = {"small", "medium", "large"};
  } else if (sidecar == nullptr) {
    throw ValidationError("attribute '" + attribute +
                          "' is neither count nor scale and no sidecar was given");
  }

  std::map<std::string, std::vector<metrics::NamedPair>> groups;
  std::vector<std::string> missing;
  for (const auto& p : pairs) {
    AttributeRecord record = attribute_record(p.name, p.pair.gt);
    std::string label;
    if (sidecar != nullptr) {
      const auto it = sidecar->find(p.name);
      if (it != sidecar->end()) record.labels = it->second;
    }
    if (attribute == "count") {
      label = count_group(record.object_count);
    } else if (attribute == "scale") {
      label = std::string(to_string(record.scale_bin));
    } else {
      const auto it = record.labels.find(attribute);
      if (it == record.labels.end()) {
        missing.push_back(p.name);
        continue;
      }
      label = it->second;
    }
    groups[label].push_back(p);
    result.records.push_back(std::move(record));
  }
  if (!missing.empty()) {
    std::string msg = "sidecar has no '" + attribute + "' label for:";
    for (const auto& m : missing) msg += "\n  " + m;
    throw ValidationError(msg);
  }
  for (const auto& label : expected) {
    if (!groups.count(label)) result.notes.push_back("group '" + label + "' is empty and omitted");
  }
  for (auto& [label, members] : groups) {
    AttributeGroup g;
    g.label = label;
    for (const auto& m : members) g.members.push_back(m.name);
    g.report = metrics::evaluate_dataset(members, threads);
    result.groups.push_back(std::move(g));
  }
  return result;
}

nlohmann::json attribute_json(const AttributeEvaluation& result, EVariant e_variant) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : result.records) {
    records.push_back({{"id", r.id},
                       {"object_count", r.object_count},
                       {"scale_ratio", r.scale_ratio},
                       {"scale_bin", std::string(to_string(r.scale_bin))},
                       {"labels", r.labels}});
  }
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : result.groups) {
    groups.push_back({{"label", g.label},
                      {"members", g.members},
                      {"aggregate", aggregate_json(g.report, e_variant)}});
  }
  return {{"attribute", result.attribute},
          {"e_variant", e_variant == EVariant::kMax ? "max" : "mean"},
          {"records", records},
          {"groups", groups},
          {"notes", result.notes}};
}

std::string attribute_csv(const AttributeEvaluation& result, EVariant e_variant) {
  std::string out = "group,images,s_measure,f_max," + e_key(e_variant) + ",mae\n";
  for (const auto& g : result.groups) {
    out += g.label + "," + std::to_string(g.members.size()) + "," +
           format_double(g.report.s_measure) + "," + format_double(g.report.f_max) + "," +
           format_double(e_value(g.report, e_variant)) + "," + format_double(g.report.mae) + "\n";
  }
  return out;
}

}  // namespace spnet
