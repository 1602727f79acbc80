#include "blockrec/param_store.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "blockrec/errors.hpp"

namespace blockrec {

Param& ParamStore::create(const std::string& name, Tensor init) {
  if (entries_.count(name)) throw contract_error("parameter name already registered: " + name);
  init.requires_grad = true;
  Param p;
  p.name = name;
  p.grad.assign(init.size(), 0.0);
  p.value = std::move(init);
  auto [it, ok] = entries_.emplace(name, std::move(p));
  (void)ok;
  return it->second;
}

Param& ParamStore::create_normal(const std::string& name, std::vector<std::size_t> shape,
                                 double stddev, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.values) v = rng.normal(0.0, stddev);
  return create(name, std::move(t));
}

Param& ParamStore::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw contract_error("unknown parameter: " + name);
  return it->second;
}

const Param& ParamStore::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw contract_error("unknown parameter: " + name);
  return it->second;
}

void ParamStore::zero_grads() {
  for (auto& [name, p] : entries_) p.grad.assign(p.value.size(), 0.0);
}

void adam_step(ParamStore& params, const AdamConfig& config, AdamState& state) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (auto& [name, p] : params.entries()) {
    if (p.grad.size() != p.value.size())
      throw contract_error("missing gradient for parameter " + name);
    auto& mom = state.moments[name];
    if (mom.m.size() != p.value.size()) {
      mom.m.assign(p.value.size(), 0.0);
      mom.v.assign(p.value.size(), 0.0);
    }
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      mom.m[i] = config.beta1 * mom.m[i] + (1.0 - config.beta1) * g;
      mom.v[i] = config.beta2 * mom.v[i] + (1.0 - config.beta2) * g * g;
      const double mhat = mom.m[i] / bc1;
      const double vhat = mom.v[i] / bc2;
      if (config.weight_decay > 0.0) p.value.values[i] *= 1.0 - config.lr * config.weight_decay;
      p.value.values[i] -= config.lr * mhat / (std::sqrt(vhat) + config.eps);
    }
  }
}

namespace {

constexpr char kMagic[4] = {'B', 'R', 'K', 'P'};

template <typename T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw parse_error("truncated checkpoint: " + path);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const std::string& config_json) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw parse_error("cannot open checkpoint for writing: " + path);
  out.write(kMagic, 4);
  write_pod<std::uint32_t>(out, kCheckpointVersion);
  write_pod<std::uint64_t>(out, config_json.size());
  out.write(config_json.data(), static_cast<std::streamsize>(config_json.size()));
  write_pod<std::uint64_t>(out, params.entries().size());
  for (const auto& [name, p] : params.entries()) {
    write_pod<std::uint64_t>(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.shape.size()));
    for (auto d : p.value.shape) write_pod<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(p.value.values.data()),
              static_cast<std::streamsize>(p.value.values.size() * sizeof(double)));
  }
  if (!out) throw parse_error("failed writing checkpoint: " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw parse_error("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw parse_error("not a checkpoint file: " + path);
  Checkpoint ckpt;
  ckpt.version = read_pod<std::uint32_t>(in, path);
  if (ckpt.version != kCheckpointVersion)
    throw parse_error("unsupported checkpoint version " + std::to_string(ckpt.version) + ": " + path);
  const auto cfg_len = read_pod<std::uint64_t>(in, path);
  ckpt.config_json.resize(cfg_len);
  in.read(ckpt.config_json.data(), static_cast<std::streamsize>(cfg_len));
  const auto count = read_pod<std::uint64_t>(in, path);
  for (std::uint64_t r = 0; r < count; ++r) {
    const auto name_len = read_pod<std::uint64_t>(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(name_len));
    const auto ndims = read_pod<std::uint32_t>(in, path);
    std::vector<std::size_t> shape(ndims);
    for (auto& d : shape) d = read_pod<std::uint64_t>(in, path);
    Tensor t = Tensor::zeros(shape);
    in.read(reinterpret_cast<char*>(t.values.data()),
            static_cast<std::streamsize>(t.values.size() * sizeof(double)));
    if (!in) throw parse_error("truncated checkpoint: " + path);
    ckpt.tensors.emplace(std::move(name), std::move(t));
  }
  return ckpt;
}

void load_into(ParamStore& params, const Checkpoint& ckpt) {
  for (const auto& [name, tensor] : ckpt.tensors) {
    if (!params.has(name)) throw contract_error("checkpoint has unknown parameter: " + name);
    Param& p = params.at(name);
    if (p.value.shape != tensor.shape)
      throw contract_error("checkpoint shape mismatch for " + name + ": store " +
                           shape_str(p.value.shape) + " vs file " + shape_str(tensor.shape));
    p.value.values = tensor.values;
  }
  for (const auto& [name, p] : params.entries())
    if (!ckpt.tensors.count(name))
      throw contract_error("checkpoint is missing parameter: " + name);
}

}  // namespace blockrec
