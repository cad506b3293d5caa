#include "spnet/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "spnet/loss.hpp"
#include "spnet/metrics.hpp"

namespace spnet {

namespace {

void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> keys,
                         const char* what) {
  if (!j.is_object()) throw ValidationError(std::string(what) + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return key == k; })) {
      throw ValidationError(std::string(what) + ": unknown key '" + key + "'");
    }
  }
}

template <typename T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

std::vector<std::vector<double>> snapshot(const ParameterStore& store) {
  std::vector<std::vector<double>> out;
  out.reserve(store.size());
  for (const Parameter& p : store.all()) {
    const auto d = p.value.data();
    out.emplace_back(d.begin(), d.end());
  }
  return out;
}

void restore(ParameterStore& store, const std::vector<std::vector<double>>& values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto dst = store.all()[i].value.mutable_data();
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

}  // namespace

void OptimizerConfig::validate() const {
  if (kind != "adam") throw ValidationError("optimizer.kind: only 'adam' is supported");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ValidationError("optimizer.lr must be > 0");
  if (!(lr_decay_factor > 0.0)) {
    throw ValidationError("optimizer.lr_decay_factor must be > 0");
  }
  if (lr_decay_every_epochs < 1) {
    throw ValidationError("optimizer.lr_decay_every_epochs must be >= 1");
  }
  for (double b : betas) {
    if (!(b >= 0.0 && b < 1.0)) throw ValidationError("optimizer.betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ValidationError("optimizer.eps must be > 0");
}

void RunConfig::validate() const {
  model.validate();
  loss.validate();
  optimizer.validate();
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
}

void to_json(nlohmann::json& j, const OptimizerConfig& c) {
  j = {{"kind", c.kind},
       {"lr", c.lr},
       {"lr_decay_factor", c.lr_decay_factor},
       {"lr_decay_every_epochs", c.lr_decay_every_epochs},
       {"betas", c.betas},
       {"eps", c.eps}};
}

void from_json(const nlohmann::json& j, OptimizerConfig& c) {
  reject_unknown_keys(j, {"kind", "lr", "lr_decay_factor", "lr_decay_every_epochs", "betas", "eps"},
                      "optimizer");
  read_if(j, "kind", c.kind);
  read_if(j, "lr", c.lr);
  read_if(j, "lr_decay_factor", c.lr_decay_factor);
  read_if(j, "lr_decay_every_epochs", c.lr_decay_every_epochs);
  read_if(j, "betas", c.betas);
  read_if(j, "eps", c.eps);
}

void to_json(nlohmann::json& j, const AugmentConfig& c) {
  j = {{"hflip", c.hflip}, {"rotate", c.rotate}, {"border_clip", c.border_clip}};
}

void from_json(const nlohmann::json& j, AugmentConfig& c) {
  reject_unknown_keys(j, {"hflip", "rotate", "border_clip"}, "augment");
  read_if(j, "hflip", c.hflip);
  read_if(j, "rotate", c.rotate);
  read_if(j, "border_clip", c.border_clip);
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"model", c.model},         {"loss", c.loss},   {"optimizer", c.optimizer},
       {"epochs", c.epochs},       {"batch_size", c.batch_size},
       {"augment", c.augment},     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  reject_unknown_keys(j, {"model", "loss", "optimizer", "epochs", "batch_size", "augment", "seed"},
                      "run config");
  read_if(j, "model", c.model);
  read_if(j, "loss", c.loss);
  read_if(j, "optimizer", c.optimizer);
  read_if(j, "epochs", c.epochs);
  read_if(j, "batch_size", c.batch_size);
  read_if(j, "augment", c.augment);
  read_if(j, "seed", c.seed);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  RunConfig cfg;
  try {
    from_json(nlohmann::json::parse(in), cfg);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
  cfg.validate();
  return cfg;
}

double learning_rate_at(const OptimizerConfig& cfg, int epoch) {
  const int drops = epoch / cfg.lr_decay_every_epochs;
  return cfg.lr / std::pow(cfg.lr_decay_factor, drops);
}

Adam::Adam(ParameterStore& store, const OptimizerConfig& cfg) : store_(store), cfg_(cfg) {
  cfg_.validate();
  for (const Parameter& p : store_.all()) {
    m_.emplace_back(p.value.numel(), 0.0);
    v_.emplace_back(p.value.numel(), 0.0);
  }
}

void Adam::step(double lr) {
  ++t_;
  const double b1 = cfg_.betas[0];
  const double b2 = cfg_.betas[1];
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  auto& params = store_.all();
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& value = params[i].value;
    if (!value.has_grad()) continue;
    const auto g = value.grad();
    const auto x = value.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < x.size(); ++k) {
      m[k] = b1 * m[k] + (1.0 - b1) * g[k];
      v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
      x[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg_.eps);
    }
    apply_precision(x);
  }
}

std::vector<EpochRecord> train(SpNet& net, const std::vector<Scene>& data,
                               const RunConfig& run, const TrainOptions& options) {
  run.validate();
  if (data.empty()) throw ValidationError("train: empty dataset");
  const int size = net.config().input_size;
  for (const Scene& s : data) {
    if (s.gt.height != size || s.gt.width != size) {
      throw ValidationError("train: scene " + s.name + " is not at the model input size");
    }
  }
  PrecisionScope p32(Precision::kFloat32);
  std::mt19937_64 rng(run.seed);
  Adam adam(net.parameters(), run.optimizer);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto last_good = snapshot(net.parameters());
  std::vector<EpochRecord> records;

  for (int epoch = 0; epoch < run.epochs; ++epoch) {
    const double lr = learning_rate_at(run.optimizer, epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double weighted = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += run.batch_size) {
      const std::size_t end = std::min(order.size(), begin + run.batch_size);
      std::vector<Scene> batch_scenes;
      for (std::size_t k = begin; k < end; ++k) {
        batch_scenes.push_back(augment(data[order[k]], run.augment, rng));
      }
      const Batch batch = make_batch(batch_scenes);
      net.parameters().zero_grad();
      const Tensor loss = total_loss(net.forward(batch.rgb, batch.depth), batch.gt, run.loss);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        restore(net.parameters(), last_good);
        if (!options.checkpoint.empty()) save_parameters(net.parameters(), options.checkpoint);
        throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch + 1) +
                             "; parameters restored to the last finished epoch");
      }
      backward(loss);
      adam.step(lr);
      weighted += value * static_cast<double>(end - begin);
    }
    last_good = snapshot(net.parameters());
    const EpochRecord record{epoch + 1, lr, weighted / static_cast<double>(data.size())};
    records.push_back(record);
    if (options.on_epoch) options.on_epoch(record);
  }
  return records;
}

std::string format_double(double v) {
  char buf[64];
  const auto result = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, result.ptr);
}

std::string loss_csv(const std::vector<EpochRecord>& records) {
  std::string out = "epoch,lr,loss\n";
  for (const EpochRecord& r : records) {
    out += std::to_string(r.epoch) + "," + format_double(r.lr) + "," + format_double(r.loss) + "\n";
  }
  return out;
}

GrayMap predict(const SpNet& net, const Scene& scene, Readout readout) {
  NoGradGuard no_grad;
  const Batch batch = make_batch(std::span<const Scene>(&scene, 1));
  const ForwardOutput out = net.forward(batch.rgb, batch.depth);
  Tensor prob;
  switch (readout) {
    case Readout::kShared:
      prob = sigmoid(out.s_shared);
      break;
    case Readout::kRgb:
    case Readout::kDepth:
    case Readout::kCombined:
      if (!out.s_rgb || !out.s_depth) {
        throw ValidationError("predict: model has no modality-specific decoders");
      }
      prob = readout == Readout::kRgb     ? sigmoid(*out.s_rgb)
             : readout == Readout::kDepth ? sigmoid(*out.s_depth)
                                          : combine_specific_outputs(*out.s_rgb, *out.s_depth);
      break;
  }
  return tensor_to_map(prob);
}

SaliencyMaps forward_maps(const SpNet& net, const Image& rgb, const GrayMap& depth) {
  if (rgb.channels.size() != 1 && rgb.channels.size() != 3) {
    throw ValidationError("forward: rgb image needs 1 or 3 channels");
  }
  const int size = net.config().input_size;
  Scene scene;
  scene.name = "input";
  for (int c = 0; c < 3; ++c) {
    scene.rgb[c] = resize_bilinear(rgb.channels[rgb.channels.size() == 3 ? c : 0], size, size);
  }
  scene.depth = resize_bilinear(depth, size, size);
  scene.gt = GrayMap(size, size);
  NoGradGuard no_grad;
  const Batch batch = make_batch(std::span<const Scene>(&scene, 1));
  const ForwardOutput out = net.forward(batch.rgb, batch.depth);
  const auto back = [&](const Tensor& logits) {
    return resize_bilinear(tensor_to_map(sigmoid(logits)), rgb.height, rgb.width);
  };
  SaliencyMaps maps;
  maps.shared = back(out.s_shared);
  if (out.s_rgb) maps.rgb = back(*out.s_rgb);
  if (out.s_depth) maps.depth = back(*out.s_depth);
  return maps;
}

double dataset_mae(const SpNet& net, const std::vector<Scene>& data, Readout readout) {
  if (data.empty()) throw ValidationError("dataset_mae: empty dataset");
  double total = 0.0;
  for (const Scene& s : data) {
    total += metrics::mae(metrics::EvalPair{predict(net, s, readout), s.gt});
  }
  return total / static_cast<double>(data.size());
}

}  // namespace spnet
