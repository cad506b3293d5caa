#include "spnet/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <optional>

#include "spnet/ablation.hpp"
#include "spnet/evaluation.hpp"
#include "spnet/image_io.hpp"
#include "spnet/model_gradcheck.hpp"
#include "spnet/parameters.hpp"
#include "spnet/training.hpp"

namespace spnet {

namespace {

constexpr int kMaxGradcheckInput = 64;

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::string out = "out";
};

struct DataOptions {
  std::string data_dir;
  int synthetic_count = 5;
  std::optional<int> epochs;
  std::string save_data;
};

struct EvalOptions {
  std::string pred_dir;
  std::string gt_dir;
  std::string sidecar;
  std::string emit = "both";
  std::string e_variant = "max";
  std::string attr = "count";
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "Run configuration JSON");
  cmd->add_option("--seed", o.seed, "Seed for data, augmentation and initialization");
  cmd->add_option("--threads", o.threads, "Worker threads for evaluation")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--out", o.out, "Output directory");
}

void add_data(CLI::App* cmd, DataOptions& o) {
  cmd->add_option("--data-dir", o.data_dir, "Directory with rgb/, depth/ and gt/ PNGs");
  cmd->add_option("--synthetic-count", o.synthetic_count,
                  "Synthetic triples when no data directory is given")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--epochs", o.epochs, "Override the configured epoch count")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--save-data", o.save_data, "Also write the training triples as PNGs here");
}

void add_eval(CLI::App* cmd, EvalOptions& o) {
  cmd->add_option("--pred-dir", o.pred_dir, "Predicted saliency maps")->required();
  cmd->add_option("--gt-dir", o.gt_dir, "Ground-truth masks")->required();
  cmd->add_option("--emit", o.emit, "Report formats")
      ->check(CLI::IsMember({"json", "csv", "both"}));
  cmd->add_option("--e-variant", o.e_variant, "E-measure over thresholds")
      ->check(CLI::IsMember({"max", "mean"}));
}

RunConfig resolve_run(const CommonOptions& common) {
  RunConfig run = common.config.empty() ? RunConfig{} : load_run_config(common.config);
  if (common.seed) {
    run.seed = *common.seed;
    run.model.seed = *common.seed;
  }
  run.validate();
  return run;
}

std::filesystem::path prepare_out(const CommonOptions& common) {
  const std::filesystem::path dir(common.out);
  std::filesystem::create_directories(dir);
  return dir;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_bytes(std::vector<unsigned char>(text.begin(), text.end()), path);
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text(path, j.dump(2) + "\n");
}

std::vector<Scene> resolve_data(const RunConfig& run, const DataOptions& data) {
  if (!data.data_dir.empty()) return load_dataset(data.data_dir, run.model.input_size);
  return synthetic_dataset(data.synthetic_count, run.model.input_size, run.seed);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  for (char ch : text + ",") {
    if (ch == ',') {
      if (!item.empty()) out.push_back(item);
      item.clear();
    } else if (ch != ' ') {
      item += ch;
    }
  }
  return out;
}

int cmd_forward(const CommonOptions& common, const std::string& weights, const std::string& rgb,
                const std::string& depth, std::ostream& out, std::ostream& err) {
  const RunConfig run = resolve_run(common);
  SpNet net(run.model);
  load_parameters(net.parameters(), weights);
  const Image image = load_image(rgb);
  std::string warning;
  const GrayMap depth_map = load_map(depth, &warning);
  if (!warning.empty()) err << "warning: " << warning << "\n";
  PrecisionScope p32(Precision::kFloat32);
  const SaliencyMaps maps = forward_maps(net, image, depth_map);
  const auto dir = prepare_out(common);
  const std::string stem = std::filesystem::path(rgb).stem().string();
  save_map(maps.shared, dir / (stem + "_shared.png"));
  if (maps.rgb) save_map(*maps.rgb, dir / (stem + "_rgb.png"));
  if (maps.depth) save_map(*maps.depth, dir / (stem + "_depth.png"));
  out << "wrote saliency maps for " << stem << " (" << image.width << "x" << image.height
      << ") to " << dir.string() << "\n";
  return kExitOk;
}

int cmd_eval(const CommonOptions& common, const EvalOptions& eval, std::ostream& out,
             std::ostream& err) {
  const EVariant variant = parse_e_variant(eval.e_variant);
  std::vector<std::string> warnings;
  auto pairs = load_eval_pairs(eval.pred_dir, eval.gt_dir, &warnings);
  for (const auto& w : warnings) err << "warning: " << w << "\n";
  const metrics::MetricsReport report = metrics::evaluate_dataset(std::move(pairs), common.threads);
  for (const auto& s : report.skipped) {
    err << "note: " << s << " has an empty ground truth and is left out of F and PR\n";
  }
  const auto dir = prepare_out(common);
  if (eval.emit != "csv") write_json(dir / "report.json", report_json(report, variant));
  if (eval.emit != "json") write_text(dir / "report.csv", report_csv(report, variant));
  write_text(dir / "pr_curve.csv", pr_curve_csv(report));
  write_text(dir / "f_curve.csv", f_curve_csv(report));
  out << "images " << report.images.size() << "  S " << format_double(report.s_measure)
      << "  maxF " << format_double(report.f_max) << "  E(" << eval.e_variant << ") "
      << format_double(variant == EVariant::kMax ? report.e_max : report.e_mean) << "  MAE "
      << format_double(report.mae) << "\n";
  return kExitOk;
}

int cmd_attr_eval(const CommonOptions& common, const EvalOptions& eval, std::ostream& out,
                  std::ostream& err) {
  const EVariant variant = parse_e_variant(eval.e_variant);
  std::vector<std::string> warnings;
  const auto pairs = load_eval_pairs(eval.pred_dir, eval.gt_dir, &warnings);
  for (const auto& w : warnings) err << "warning: " << w << "\n";
  std::optional<Sidecar> sidecar;
  if (!eval.sidecar.empty()) sidecar = load_sidecar(eval.sidecar);
  const AttributeEvaluation result =
      attribute_evaluation(pairs, eval.attr, sidecar ? &*sidecar : nullptr, common.threads);
  for (const auto& n : result.notes) err << "note: " << n << "\n";
  const auto dir = prepare_out(common);
  if (eval.emit != "csv") write_json(dir / "attr_report.json", attribute_json(result, variant));
  if (eval.emit != "json") write_text(dir / "attr_report.csv", attribute_csv(result, variant));
  for (const auto& g : result.groups) {
    out << eval.attr << "=" << g.label << "  images " << g.members.size() << "  S "
        << format_double(g.report.s_measure) << "  MAE " << format_double(g.report.mae) << "\n";
  }
  return kExitOk;
}

int cmd_gradcheck(const CommonOptions& common, int samples, std::ostream& out) {
  const RunConfig run = resolve_run(common);
  if (run.model.input_size > kMaxGradcheckInput) {
    throw ValidationError("gradcheck needs a toy-size model (input_size <= 64)");
  }
  ModelGradcheckOptions options;
  options.samples = samples;
  options.seed = run.seed;
  const ModelGradcheckReport report = model_gradcheck(run.model, run.loss, options);
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& s : report.samples) {
    rows.push_back({{"parameter", s.parameter},
                    {"group", s.group},
                    {"index", s.index},
                    {"analytic", s.analytic},
                    {"numeric", s.numeric},
                    {"error", s.error}});
  }
  const nlohmann::json j = {{"samples", rows},
                            {"groups", report.groups},
                            {"max_error", report.max_error},
                            {"tolerance", report.tolerance},
                            {"redrawn", report.redrawn},
                            {"passed", report.passed()}};
  write_json(prepare_out(common) / "gradcheck.json", j);
  out << "gradcheck " << report.samples.size() << " samples over " << report.groups.size()
      << " groups  max error " << format_double(report.max_error) << "  tolerance "
      << format_double(report.tolerance) << "  " << (report.passed() ? "PASS" : "FAIL") << "\n";
  return report.passed() ? kExitOk : kExitGradcheck;
}

int cmd_train(const CommonOptions& common, const DataOptions& data, std::ostream& out) {
  RunConfig run = resolve_run(common);
  if (data.epochs) run.epochs = *data.epochs;
  const std::vector<Scene> scenes = resolve_data(run, data);
  if (!data.save_data.empty()) save_dataset(scenes, data.save_data);
  const auto dir = prepare_out(common);
  write_json(dir / "run_config.json", run);
  SpNet net(run.model);
  TrainOptions options;
  options.checkpoint = dir / "last_good.salf";
  std::vector<EpochRecord> records;
  options.on_epoch = [&](const EpochRecord& r) {
    records.push_back(r);
    write_text(dir / "loss.csv", loss_csv(records));
  };
  train(net, scenes, run, options);
  save_parameters(net.parameters(), dir / "weights.salf");
  PrecisionScope p32(Precision::kFloat32);
  const double mae = dataset_mae(net, scenes);
  const nlohmann::json summary = {{"samples", scenes.size()},
                                  {"epochs", run.epochs},
                                  {"first_epoch_loss", records.front().loss},
                                  {"final_epoch_loss", records.back().loss},
                                  {"loss_ratio", records.back().loss / records.front().loss},
                                  {"training_mae", mae}};
  write_json(dir / "summary.json", summary);
  out << "trained " << run.epochs << " epochs on " << scenes.size() << " samples  loss "
      << format_double(records.front().loss) << " -> " << format_double(records.back().loss)
      << "  training MAE " << format_double(mae) << "\n";
  return kExitOk;
}

int cmd_ablate(const CommonOptions& common, const DataOptions& data, const std::string& list,
               std::ostream& out) {
  RunConfig run = resolve_run(common);
  if (data.epochs) run.epochs = *data.epochs;
  const std::vector<std::string> names = list.empty() ? variant_names() : split_list(list);
  for (const auto& n : names) make_variant(n, run.model);
  const std::vector<Scene> scenes = resolve_data(run, data);
  const auto results = ablate(run, scenes, names);
  const auto dir = prepare_out(common);
  write_json(dir / "ablation.json", ablation_json(results));
  write_text(dir / "ablation.csv", ablation_csv(results));
  for (const auto& r : results) {
    out << r.name << "  S " << format_double(r.s_measure) << "  MAE " << format_double(r.mae)
        << "\n";
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Specificity-preserving RGB-D saliency network: toy training and evaluation"};
  app.require_subcommand(1);

  CommonOptions common;
  DataOptions data;
  EvalOptions eval;
  std::string weights, rgb, depth, variants;
  int samples = 30;

  auto* forward = app.add_subcommand("forward", "Predict saliency maps for one RGB-D pair");
  add_common(forward, common);
  forward->add_option("--weights", weights, "Weights file")->required();
  forward->add_option("--rgb", rgb, "RGB image (PNG)")->required();
  forward->add_option("--depth", depth, "Depth map (PNG)")->required();

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate predicted maps against ground truth");
  add_common(eval_cmd, common);
  add_eval(eval_cmd, eval);

  auto* attr = app.add_subcommand("attr-eval", "Evaluate per attribute group");
  add_common(attr, common);
  add_eval(attr, eval);
  attr->add_option("--attr", eval.attr, "count, scale or a sidecar column");
  attr->add_option("--sidecar", eval.sidecar, "CSV of stem plus label columns");

  auto* grad = app.add_subcommand("gradcheck", "Compare gradients with finite differences");
  add_common(grad, common);
  grad->add_option("--samples", samples, "Parameter entries to check");

  auto* train_cmd = app.add_subcommand("train-toy", "Train on a small dataset");
  add_common(train_cmd, common);
  add_data(train_cmd, data);

  auto* ablate_cmd = app.add_subcommand("ablate", "Train and score ablation variants");
  add_common(ablate_cmd, common);
  add_data(ablate_cmd, data);
  ablate_cmd->add_option("--variants", variants, "Comma-separated variant names (default all)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }

  try {
    if (*forward) return cmd_forward(common, weights, rgb, depth, out, err);
    if (*eval_cmd) return cmd_eval(common, eval, out, err);
    if (*attr) return cmd_attr_eval(common, eval, out, err);
    if (*grad) return cmd_gradcheck(common, samples, out);
    if (*train_cmd) return cmd_train(common, data, out);
    if (*ablate_cmd) return cmd_ablate(common, data, variants, out);
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    err << "validation failure: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ImageError& e) {
    err << "validation failure: " << e.what() << "\n";
    return kExitValidation;
  } catch (const FormatError& e) {
    err << "validation failure: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitValidation;
}

}  // namespace spnet
