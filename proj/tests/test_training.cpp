#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "spnet/ablation.hpp"
#include "spnet/training.hpp"
#include "temp_dir.hpp"

using namespace spnet;

namespace {

ModelConfig tiny_model() {
  ModelConfig m;
  m.input_size = 64;
  m.channels = {2, 4, 4, 8, 8};
  return m;
}

RunConfig tiny_run() {
  RunConfig run;
  run.model = tiny_model();
  run.optimizer.lr = 3e-3;
  run.epochs = 3;
  run.batch_size = 2;
  return run;
}

std::vector<double> flat_weights(const ParameterStore& store) {
  std::vector<double> out;
  for (const Parameter& p : store.all()) {
    const auto d = p.value.data();
    out.insert(out.end(), d.begin(), d.end());
  }
  return out;
}

}  // namespace

TEST_CASE("learning rate follows the step schedule exactly") {
  OptimizerConfig cfg;
  CHECK(learning_rate_at(cfg, 0) == cfg.lr);
  CHECK(learning_rate_at(cfg, 59) == cfg.lr);
  CHECK(learning_rate_at(cfg, 60) == cfg.lr / 10.0);
  CHECK(learning_rate_at(cfg, 130) == cfg.lr / 100.0);
  CHECK(learning_rate_at(cfg, 199) == cfg.lr / 1000.0);
  cfg.lr = 3e-3;
  for (int e = 0; e < 400; ++e) {
    CHECK(learning_rate_at(cfg, e) == cfg.lr / std::pow(10.0, e / 60));
  }
}

TEST_CASE("run config defaults, JSON round trip and invariants") {
  const RunConfig defaults;
  CHECK(defaults.optimizer.kind == "adam");
  CHECK(defaults.optimizer.lr == 1e-4);
  CHECK(defaults.optimizer.lr_decay_factor == 10.0);
  CHECK(defaults.optimizer.lr_decay_every_epochs == 60);
  CHECK(defaults.optimizer.betas[0] == 0.9);
  CHECK(defaults.optimizer.betas[1] == 0.999);
  CHECK(defaults.optimizer.eps == 1e-8);
  CHECK(defaults.batch_size == 4);

  RunConfig run = tiny_run();
  run.augment.rotate = true;
  run.seed = 17;
  const nlohmann::json j = run;
  RunConfig back;
  from_json(j, back);
  CHECK(nlohmann::json(back) == j);

  test::TempDir dir("cfg");
  std::ofstream(dir.path() / "bad.json") << R"({"optimizer": {"lr": 0}})";
  CHECK_THROWS_AS(load_run_config(dir.path() / "bad.json"), ValidationError);
  std::ofstream(dir.path() / "typo.json") << R"({"epoch": 3})";
  CHECK_THROWS_AS(load_run_config(dir.path() / "typo.json"), ValidationError);
  std::ofstream(dir.path() / "batch.json") << R"({"batch_size": 0})";
  CHECK_THROWS_AS(load_run_config(dir.path() / "batch.json"), ValidationError);
  std::ofstream(dir.path() / "epochs.json") << R"({"epochs": 0})";
  CHECK_THROWS_AS(load_run_config(dir.path() / "epochs.json"), ValidationError);
  std::ofstream(dir.path() / "ok.json") << R"({"epochs": 7, "augment": {"hflip": true}})";
  const RunConfig ok = load_run_config(dir.path() / "ok.json");
  CHECK(ok.epochs == 7);
  CHECK(ok.augment.hflip);
  CHECK(!ok.augment.rotate);
}

TEST_CASE("Adam update matches a hand computation") {
  PrecisionScope p64(Precision::kFloat64);
  ParameterStore store(3);
  Tensor w = store.conv_weight("w", 1, 1, 1);
  const double w0 = w.data()[0];
  OptimizerConfig cfg;
  Adam adam(store, cfg);
  double m = 0.0, v = 0.0, x = w0;
  for (int t = 1; t <= 3; ++t) {
    store.zero_grad();
    const double g = 0.5 * t - 0.7;
    w.mutable_grad()[0] = g;
    adam.step(0.01);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    x -= 0.01 * (m / (1.0 - std::pow(0.9, t))) / (std::sqrt(v / (1.0 - std::pow(0.999, t))) + 1e-8);
    CHECK(w.data()[0] == doctest::Approx(x).epsilon(1e-14));
  }
  CHECK(adam.steps() == 3);
}

TEST_CASE("training is deterministic for a fixed seed") {
  const RunConfig run = tiny_run();
  const auto data = synthetic_dataset(3, run.model.input_size, 5);
  SpNet a(run.model), b(run.model);
  const auto ra = train(a, data, run);
  const auto rb = train(b, data, run);
  REQUIRE(ra.size() == 3);
  for (std::size_t i = 0; i < ra.size(); ++i) CHECK(ra[i].loss == rb[i].loss);
  CHECK(flat_weights(a.parameters()) == flat_weights(b.parameters()));
  CHECK(loss_csv(ra) == loss_csv(rb));

  RunConfig other = run;
  other.seed = 6;
  SpNet c(run.model);
  const auto rc = train(c, data, other);
  CHECK(flat_weights(a.parameters()) != flat_weights(c.parameters()));
}

TEST_CASE("training with augmentation is deterministic and lowers the loss") {
  RunConfig run = tiny_run();
  run.augment = {true, true, true};
  run.epochs = 6;
  const auto data = synthetic_dataset(4, run.model.input_size, 8);
  SpNet a(run.model), b(run.model);
  const auto ra = train(a, data, run);
  const auto rb = train(b, data, run);
  CHECK(loss_csv(ra) == loss_csv(rb));
  CHECK(ra.back().loss < ra.front().loss);
}

TEST_CASE("parameters stay float-representable during training") {
  const RunConfig run = tiny_run();
  const auto data = synthetic_dataset(2, run.model.input_size, 9);
  SpNet net(run.model);
  train(net, data, run);
  for (double v : flat_weights(net.parameters())) {
    CHECK(static_cast<double>(static_cast<float>(v)) == v);
  }
}

TEST_CASE("epoch records carry the scheduled learning rate") {
  RunConfig run = tiny_run();
  run.epochs = 4;
  run.optimizer.lr_decay_every_epochs = 2;
  const auto data = synthetic_dataset(2, run.model.input_size, 1);
  SpNet net(run.model);
  std::vector<int> seen;
  TrainOptions options;
  options.on_epoch = [&](const EpochRecord& r) { seen.push_back(r.epoch); };
  const auto records = train(net, data, run, options);
  CHECK(seen == std::vector<int>{1, 2, 3, 4});
  CHECK(records[0].lr == 3e-3);
  CHECK(records[1].lr == 3e-3);
  CHECK(records[2].lr == 3e-3 / 10.0);
  CHECK(records[3].lr == 3e-3 / 10.0);
  const std::string csv = loss_csv(records);
  CHECK(csv.rfind("epoch,lr,loss\n1,", 0) == 0);
}

TEST_CASE("non-finite loss aborts with the last good parameters") {
  const RunConfig run = tiny_run();
  auto data = synthetic_dataset(2, run.model.input_size, 2);
  SpNet net(run.model);
  const auto initial = flat_weights(net.parameters());
  data[1].depth.values[5] = std::nan("");
  test::TempDir dir("nan");
  TrainOptions options;
  options.checkpoint = dir.path() / "last_good.salf";
  CHECK_THROWS_AS(train(net, data, run, options), NumericalError);
  CHECK(flat_weights(net.parameters()) == initial);
  REQUIRE(std::filesystem::exists(options.checkpoint));
  SpNet loaded(run.model);
  load_parameters(loaded.parameters(), options.checkpoint);
  CHECK(flat_weights(loaded.parameters()) == initial);
}

TEST_CASE("training preconditions") {
  RunConfig run = tiny_run();
  SpNet net(run.model);
  CHECK_THROWS_AS(train(net, {}, run), ValidationError);
  const auto wrong_size = synthetic_dataset(1, 16, 0);
  CHECK_THROWS_AS(train(net, wrong_size, run), ValidationError);
  run.optimizer.kind = "sgd";
  CHECK_THROWS_AS(train(net, synthetic_dataset(1, 64, 0), run), ValidationError);
}

TEST_CASE("forward maps come back at the input image size and in range") {
  const ModelConfig model = tiny_model();
  SpNet net(model);
  const Image black{23, 41, {GrayMap(23, 41), GrayMap(23, 41), GrayMap(23, 41)}};
  const SaliencyMaps maps = forward_maps(net, black, GrayMap(17, 9));
  for (const GrayMap* m : {&maps.shared, &*maps.rgb, &*maps.depth}) {
    CHECK(m->height == 23);
    CHECK(m->width == 41);
    for (double v : m->values) {
      CHECK(std::isfinite(v));
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  const SaliencyMaps again = forward_maps(net, black, GrayMap(17, 9));
  CHECK(again.shared.values == maps.shared.values);

  ModelConfig c1 = model;
  c1.specific_decoders = false;
  SpNet shared_only(c1);
  const Image gray{8, 8, {GrayMap(8, 8, 0.5)}};
  const SaliencyMaps one = forward_maps(shared_only, gray, GrayMap(8, 8, 0.2));
  CHECK(!one.rgb);
  CHECK(!one.depth);
}

TEST_CASE("ablation variants toggle one setting each") {
  const ModelConfig base = tiny_model();
  CHECK(make_variant("A1", base).model.cim_mode == CimMode::kConcatOnly);
  CHECK(make_variant("A2", base).model.cim_mode == CimMode::kEnhanceOnly);
  CHECK(make_variant("A3", base).model.cim_mode == CimMode::kFuseOnly);
  CHECK(make_variant("A4", base).model.cim_mode == CimMode::kNoPropagation);
  CHECK(make_variant("B1", base).model.mfa_mode == MfaMode::kOff);
  CHECK(make_variant("B2", base).model.mfa_mode == MfaMode::kEnhanceFusion);
  CHECK(make_variant("B3", base).model.mfa_mode == MfaMode::kConcat);
  CHECK(!make_variant("C1", base).model.specific_decoders);
  const Variant c2 = make_variant("C2", base);
  CHECK(c2.readout == Readout::kCombined);
  CHECK(nlohmann::json(c2.model) == nlohmann::json(base));
  CHECK(make_variant("CIM1", base).model.cim_levels == 1);
  CHECK(make_variant("CIM3", base).model.cim_levels == 3);
  CHECK(nlohmann::json(make_variant("full", base).model) == nlohmann::json(base));
  CHECK_THROWS_AS(make_variant("A5", base), ValidationError);
  CHECK(variant_names().size() == 12);
}

TEST_CASE("ablation variants share initial weights by name") {
  const ModelConfig base = tiny_model();
  SpNet full(base);
  for (const auto& name : variant_names()) {
    SpNet other(make_variant(name, base).model);
    std::size_t shared = 0;
    for (const Parameter& p : other.parameters().all()) {
      if (!full.parameters().contains(p.name)) continue;
      const Tensor& q = full.parameters().get(p.name);
      if (q.shape() != p.value.shape()) continue;
      const auto a = p.value.data();
      const auto b = q.data();
      CHECK(std::equal(a.begin(), a.end(), b.begin()));
      ++shared;
    }
    CHECK(shared > 0);
  }
}

TEST_CASE("ablate trains each variant and reports its scores") {
  RunConfig run = tiny_run();
  run.epochs = 2;
  const auto data = synthetic_dataset(2, run.model.input_size, 4);
  const auto results = ablate(run, data, {"full", "C2", "C1"});
  REQUIRE(results.size() == 3);
  for (const auto& r : results) {
    CHECK(r.trajectory.size() == 2);
    CHECK(r.mae >= 0.0);
    CHECK(r.mae <= 1.0);
    CHECK(r.s_measure >= 0.0);
    CHECK(r.s_measure <= 1.0);
  }
  CHECK(results[0].trajectory.back().loss == results[1].trajectory.back().loss);
  CHECK(results[0].mae != results[1].mae);
  const std::string csv = ablation_csv(results);
  CHECK(csv.rfind("variant,s_measure,mae,final_loss\nfull,", 0) == 0);
  CHECK_THROWS_AS(ablate(run, data, {"full", "nope"}), ValidationError);
}

TEST_CASE("shipped run configurations parse and validate") {
  const std::filesystem::path dir = std::filesystem::path(SPNET_SOURCE_DIR) / "configs";
  const RunConfig toy = load_run_config(dir / "toy.json");
  CHECK(toy.model.input_size == 64);
  CHECK(toy.epochs == 200);
  CHECK(toy.batch_size == 4);
  CHECK(toy.optimizer.lr_decay_every_epochs == 60);
  const RunConfig full = load_run_config(dir / "full_scale.json");
  CHECK(full.model.input_size == 352);
  CHECK(full.batch_size == 20);
  CHECK(full.optimizer.lr == 1e-4);
  CHECK(full.augment.hflip);
  CHECK(full.augment.rotate);
  CHECK(full.augment.border_clip);
}
