#include "spnet/parameters.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <set>

namespace spnet {

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<double> seeded_uniform(std::uint64_t seed, const std::string& name,
                                   std::size_t count, double bound) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(fnv1a64(name)),
                    static_cast<std::uint32_t>(fnv1a64(name) >> 32)};
  std::mt19937_64 gen(seq);
  std::vector<double> out(count);
  for (double& v : out) {
    // 53 random bits to [0,1), independent of the standard library's
    // distribution implementation.
    const double u = static_cast<double>(gen() >> 11) * 0x1.0p-53;
    v = static_cast<double>(static_cast<float>((2.0 * u - 1.0) * bound));
  }
  return out;
}

Tensor ParameterStore::add(const std::string& name, std::vector<int> dims,
                           Shape shape, Init init, int fan_in) {
  if (index_.count(name)) {
    throw std::invalid_argument("duplicate parameter name: " + name);
  }
  std::vector<double> values;
  switch (init) {
    case Init::kFanInUniform:
      values = seeded_uniform(seed_, name, shape.numel(),
                              std::sqrt(1.0 / static_cast<double>(fan_in)));
      break;
    case Init::kZeros:
      values.assign(shape.numel(), 0.0);
      break;
    case Init::kOnes:
      values.assign(shape.numel(), 1.0);
      break;
  }
  Tensor t = Tensor::from_data(shape, std::move(values), true);
  t.zero_grad();
  index_.emplace(name, params_.size());
  params_.push_back({name, std::move(dims), t});
  return t;
}

Tensor ParameterStore::conv_weight(const std::string& name, int out_c,
                                   int in_c, int k) {
  return add(name, {out_c, in_c, k, k}, Shape{out_c, in_c, k, k},
             Init::kFanInUniform, in_c * k * k);
}

Tensor ParameterStore::channel_vector(const std::string& name, int channels,
                                      Init init) {
  return add(name, {channels}, Shape{1, channels, 1, 1}, init, channels);
}

const Tensor& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw std::out_of_range("unknown parameter: " + name);
  }
  return params_[it->second].value;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

namespace {

static_assert(std::endian::native == std::endian::little,
              "weights container assumes a little-endian host");

void put_u32(std::vector<char>& out, std::uint32_t v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.insert(out.end(), buf, buf + 4);
}

class Reader {
 public:
  explicit Reader(const std::vector<char>& bytes) : bytes_(bytes) {}
  bool done() const { return pos_ == bytes_.size(); }
  std::uint32_t u32() {
    std::uint32_t v;
    take(&v, 4);
    return v;
  }
  float f32() {
    float v;
    take(&v, 4);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("weights file truncated");
  }
  void take(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  const std::vector<char>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<char> encode_parameters(const ParameterStore& store) {
  std::vector<char> out{'S', 'A', 'L', 'F'};
  put_u32(out, kWeightsVersion);
  for (const Parameter& p : store.all()) {
    put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out.insert(out.end(), p.name.begin(), p.name.end());
    put_u32(out, static_cast<std::uint32_t>(p.dims.size()));
    for (int d : p.dims) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : p.value.data()) {
      const float f = static_cast<float>(v);
      char buf[4];
      std::memcpy(buf, &f, 4);
      out.insert(out.end(), buf, buf + 4);
    }
  }
  return out;
}

void save_parameters(const ParameterStore& store,
                     const std::filesystem::path& path) {
  const auto bytes = encode_parameters(store);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write weights: " + path.string());
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("failed writing weights: " + path.string());
}

void decode_parameters(ParameterStore& store, const std::vector<char>& bytes) {
  Reader r(bytes);
  if (r.str(4) != "SALF") throw FormatError("bad weights magic");
  const std::uint32_t version = r.u32();
  if (version != kWeightsVersion) {
    throw FormatError("unsupported weights version " + std::to_string(version));
  }
  std::set<std::string> seen;
  while (!r.done()) {
    const std::string name = r.str(r.u32());
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw FormatError("implausible rank for " + name);
    std::vector<int> dims(rank);
    std::size_t count = 1;
    for (auto& d : dims) {
      d = static_cast<int>(r.u32());
      count *= static_cast<std::size_t>(d);
    }
    if (!store.contains(name)) {
      throw FormatError("weights contain unknown parameter " + name);
    }
    auto it = std::find_if(store.all().begin(), store.all().end(),
                           [&](const Parameter& p) { return p.name == name; });
    if (it->dims != dims) {
      throw FormatError("dimension mismatch for parameter " + name);
    }
    auto dst = it->value.mutable_data();
    if (dst.size() != count) throw FormatError("payload size mismatch " + name);
    for (double& v : dst) v = static_cast<double>(r.f32());
    seen.insert(name);
  }
  if (seen.size() != store.size()) {
    throw FormatError("weights file is missing " +
                      std::to_string(store.size() - seen.size()) +
                      " parameter(s)");
  }
}

void load_parameters(ParameterStore& store, const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read weights: " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(is)),
                          std::istreambuf_iterator<char>());
  decode_parameters(store, bytes);
}

}  // namespace spnet
