#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "blockrec/param_store.hpp"
#include "blockrec/rng.hpp"
#include "blockrec/tape.hpp"

namespace blockrec {

// Iterative four-pointer decoder. An LSTM state machine is updated from
// the embeddings of the four previously selected suggestions; four
// independent highway-maxout scorers then produce one score per candidate
// per pointer, and each pointer is the argmax of its column. The loop
// repeats until the pointer 4-tuple stops changing or max_iterations is
// reached.
struct DecoderConfig {
  std::size_t max_iterations = 8;
  std::size_t lstm_hidden_dim = 32;
  std::size_t hmn_hidden_dim = 16;
  std::size_t maxout_pool = 4;
  bool mask_within_iteration = false;  // force the 4 pointers of one iteration distinct
  double sample_temperature = 1.0;
};

inline constexpr std::size_t kBlockSize = 4;

// Parameter handles for one pointer's highway-maxout scorer.
struct HmnVars {
  Var u;        // state projection over [h; e_p1..e_p4]
  Var w1, b1;   // first maxout layer over [e_t; r]
  Var w2, b2;   // highway transform (maxout)
  Var wg, bg;   // highway gate (sigmoid)
  Var w3, b3;   // output maxout head -> scalar
};

struct DecoderVars {
  LstmVars lstm;
  std::array<HmnVars, kBlockSize> hmn;
};

void register_decoder_params(ParamStore& store, const DecoderConfig& config, std::size_t d_e,
                             Rng& rng);
DecoderVars decoder_vars(Tape& tape, ParamStore& store);

// LSTM state plus the previous iteration's selections. At iteration 0 the
// previous embeddings are zero vectors and the pointers are all 0.
struct DecoderState {
  Var h, c;
  std::array<int, kBlockSize> prev_pointers{};
  std::array<Var, kBlockSize> prev_embeddings;
};

DecoderState initial_decoder_state(Tape& tape, const DecoderConfig& config, std::size_t d_e);

// Score of one candidate embedding for pointer k given the current state.
// Reference path used by tests; decode_step computes the same values with
// the candidate-independent part hoisted.
Var hmn_score(Tape& tape, const HmnVars& vars, Var e_t, Var h,
              const std::array<Var, kBlockSize>& prev_embeddings, std::size_t maxout_pool);

// Scores for all candidates, one column per pointer.
struct PointerScores {
  std::array<std::vector<double>, kBlockSize> col;
  std::size_t candidates() const { return col[0].size(); }
};

struct DecodeStepResult {
  PointerScores scores;
  std::array<Var, kBlockSize> alpha;  // score columns on the tape, shape {n}
  std::array<int, kBlockSize> pointers;
  DecoderState state;
};

DecodeStepResult decode_step(Tape& tape, const DecoderVars& vars, const std::vector<Var>& embeddings,
                             const DecoderState& state, const DecoderConfig& config);

struct SampledPointers {
  std::array<int, kBlockSize> pointers;
  std::array<double, kBlockSize> log_prob;
};

// Independent categorical draw per pointer from softmax(alpha/temperature).
SampledPointers sample_pointers(const PointerScores& scores, double temperature, Rng& rng);

struct IterationTrace {
  PointerScores scores;
  std::array<Var, kBlockSize> alpha;
  std::array<int, kBlockSize> greedy;
  std::optional<SampledPointers> sampled;
};

struct DecodeTrace {
  std::vector<IterationTrace> iterations;
  std::array<int, kBlockSize> final_pointers{};
  std::size_t iterations_used = 0;
};

// Full decode loop from the zero initial state. When sample_rng is given,
// pointers are additionally sampled at every iteration (for the policy
// gradient); sampling never influences the greedy state transitions.
DecodeTrace decode(Tape& tape, const DecoderVars& vars, const std::vector<Var>& embeddings,
                   const DecoderConfig& config, Rng* sample_rng = nullptr);

// JSON export for --dump-trace.
std::string trace_to_string(const DecodeTrace& trace, std::int64_t query_id);

}  // namespace blockrec
