#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "blockrec/rng.hpp"
#include "blockrec/tensor.hpp"

namespace blockrec {

// One named trainable tensor plus its gradient accumulator.
struct Param {
  std::string name;
  Tensor value;
  std::vector<double> grad;
};

// Named parameter registry. Iteration order is the lexicographic name
// order (std::map), which makes optimizer sweeps and checkpoints
// deterministic.
class ParamStore {
 public:
  Param& create(const std::string& name, Tensor init);
  Param& create_normal(const std::string& name, std::vector<std::size_t> shape, double stddev,
                       Rng& rng);

  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool has(const std::string& name) const { return entries_.count(name) != 0; }

  void zero_grads();
  std::size_t size() const { return entries_.size(); }

  std::map<std::string, Param>& entries() { return entries_; }
  const std::map<std::string, Param>& entries() const { return entries_; }

 private:
  std::map<std::string, Param> entries_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled decay, applied as value *= (1 - lr*wd)
};

struct AdamState {
  struct Moments {
    std::vector<double> m, v;
  };
  std::map<std::string, Moments> moments;
  std::int64_t step = 0;
};

// Bias-corrected Adam update applied in place. Every parameter must have
// a populated gradient buffer of matching size.
void adam_step(ParamStore& params, const AdamConfig& config, AdamState& state);

// Checkpoint file: little-endian binary manifest of (name, shape, values)
// records for every entry, preceded by a format version and the run
// config JSON that produced it.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const std::string& config_json);

struct Checkpoint {
  std::uint32_t version = 0;
  std::string config_json;
  std::map<std::string, Tensor> tensors;
};

Checkpoint read_checkpoint(const std::string& path);

// Copies checkpoint tensors into an already-built store. A name the store
// does not know, a store entry the file lacks, or a shape mismatch is a
// hard error.
void load_into(ParamStore& params, const Checkpoint& ckpt);

}  // namespace blockrec
