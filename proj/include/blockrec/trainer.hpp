#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "blockrec/dataset.hpp"
#include "blockrec/decoder.hpp"
#include "blockrec/encoder.hpp"
#include "blockrec/evaluation.hpp"
#include "blockrec/mmr.hpp"
#include "blockrec/objectives.hpp"
#include "blockrec/param_store.hpp"

namespace blockrec {

struct RunConfig {
  std::string data_path;
  std::string checkpoint_path;
  std::string report_path;
  std::string train_log_path;

  std::vector<std::string> objectives = {"ce"};
  EncoderConfig encoder;
  DecoderConfig decoder;
  AdamConfig adam;
  ClassifierTrainConfig classifier;
  GeneratorConfig generator;
  std::size_t epochs = 5;
  std::uint64_t seed = 1;
  double grad_clip_norm = 5.0;  // global-norm clip per step; <= 0 disables
};

RunConfig config_from_json_string(const std::string& text);
RunConfig read_run_config(const std::string& path);
std::string config_to_json_string(const RunConfig& config);
std::string config_hash(const RunConfig& config);

// Registers every trainable tensor of the pointer model: encoder.*,
// decoder.*, and one loss.s_* scalar per active objective. Rows of the
// experiment matrix share initial weights because the registration order
// and the init stream depend only on the seed, not on the objective set.
ParamStore build_pointer_model(const RunConfig& config);

struct TrainResult {
  ParamStore params;  // best-validation weights
  double initial_train_ce = 0.0;
  double final_train_ce = 0.0;
  MetricsReport best_validation;
  std::size_t best_epoch = 0;
  std::vector<std::string> log_lines;
};

// Per query: encode -> decode (sampling each iteration when RL objectives
// are active) -> losses -> uncertainty combination -> backward -> Adam.
// One query per optimization step. A non-finite loss aborts with the
// offending query id and the last finite loss values.
TrainResult train(const RunConfig& config, const std::vector<QueryExample>& corpus);

// Greedy-decode metrics over the given queries. When dump_trace_path is
// non-empty, per-query decode traces are written there as JSON lines.
MetricsReport evaluate_pointer_model(const std::vector<QueryExample>& corpus,
                                     const std::vector<std::size_t>& indices, ParamStore& store,
                                     const EncoderConfig& enc_config,
                                     const DecoderConfig& dec_config,
                                     const std::string& dump_trace_path = "");

MetricsReport evaluate_mmr(const std::vector<QueryExample>& corpus,
                           const std::vector<std::size_t>& indices, ParamStore& store,
                           const MmrConfig& config);

// One row of the experiment matrix: either a pointer-model objective set
// or an MMR baseline at a fixed gamma.
struct MatrixRowSpec {
  std::string name;
  bool is_mmr = false;
  double gamma = 0.0;
  std::vector<std::string> objectives;
};

// The seven stock rows: ce; ce+f1; ce+f1+mrr; ce+f1+div; ce+f1+mrr+div;
// mmr(γ = 0.6); mmr(γ = 1.0).
std::vector<MatrixRowSpec> default_matrix_rows();

struct MatrixRowResult {
  std::string name;
  bool failed = false;
  std::string error;
  MetricsReport test;
};

struct MatrixResult {
  std::vector<MatrixRowResult> rows;
  std::uint64_t seed = 0;
};

// Trains/evaluates every row on a shared split. Pointer rows start from
// identical initial weights; MMR rows share one classifier checkpoint.
// A failing row is annotated and does not abort the rest.
MatrixResult run_matrix(const RunConfig& base, const std::vector<QueryExample>& corpus,
                        const std::vector<MatrixRowSpec>& rows);

struct MultiSeedMatrixResult {
  std::vector<MatrixResult> per_seed;
  // Per row: the across-seed median of each test metric.
  std::vector<MatrixRowResult> median_rows;
};

MultiSeedMatrixResult run_matrix_seeds(const RunConfig& base,
                                       const std::vector<QueryExample>& corpus,
                                       const std::vector<MatrixRowSpec>& rows,
                                       const std::vector<std::uint64_t>& seeds);

std::string matrix_to_string(const MultiSeedMatrixResult& result);
std::string matrix_table(const MultiSeedMatrixResult& result);  // human-readable table

}  // namespace blockrec
