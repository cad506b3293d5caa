#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "spnet/tensor.hpp"

namespace spnet {

struct Parameter {
  std::string name;
  // Logical extents as serialized: {out, in, k, k} for kernels, {C} for
  // per-channel vectors.
  std::vector<int> dims;
  Tensor value;
};

enum class Init {
  kFanInUniform,  // U(-b, b), b = sqrt(1 / fan_in)
  kZeros,
  kOnes,
};

/// Owns every trainable tensor of a model, addressed by unique name.
/// Initial values depend only on (seed, name), so two models that share a
/// parameter name start from the same values.
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed = 0) : seed_(seed) {}

  Tensor conv_weight(const std::string& name, int out_c, int in_c, int k);
  Tensor channel_vector(const std::string& name, int channels, Init init);

  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const {
    return index_.count(name) != 0;
  }
  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();
  std::uint64_t seed() const { return seed_; }

 private:
  Tensor add(const std::string& name, std::vector<int> dims, Shape shape,
             Init init, int fan_in);

  std::uint64_t seed_;
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Uniform samples in [-bound, bound], exactly representable as float,
/// drawn from a generator keyed by (seed, name).
std::vector<double> seeded_uniform(std::uint64_t seed, const std::string& name,
                                   std::size_t count, double bound);

std::uint64_t fnv1a64(const std::string& text);

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kWeightsVersion = 1;

/// Writes the flat little-endian container: "SALF", version u32, then per
/// parameter {name length u32, name, rank u32, dims u32 x rank, f32 x n}.
void save_parameters(const ParameterStore& store,
                     const std::filesystem::path& path);
std::vector<char> encode_parameters(const ParameterStore& store);

/// Loads values into an existing store. Every record must match a parameter
/// by name and dims, and every parameter must be present.
void load_parameters(ParameterStore& store, const std::filesystem::path& path);
void decode_parameters(ParameterStore& store, const std::vector<char>& bytes);

}  // namespace spnet
