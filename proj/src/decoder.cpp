#include "blockrec/decoder.hpp"

#include <cmath>

#include "json.hpp"

#include "blockrec/errors.hpp"

namespace blockrec {

namespace {

std::string hmn_prefix(std::size_t k) { return "decoder.hmn" + std::to_string(k) + "."; }

// Highway combination: l1 + g * (t2 - l1).
Var highway(Tape& tape, Var l1, Var transformed, Var gate) {
  return tape.add(l1, tape.mul(gate, tape.sub(transformed, l1)));
}

Var hmn_from_r(Tape& tape, const HmnVars& vars, Var e_t, Var r, std::size_t pool) {
  const Var in = tape.concat({e_t, r});
  const Var l1 = tape.maxout(tape.add(tape.matmul(vars.w1, in), vars.b1), pool);
  const Var t2 = tape.maxout(tape.add(tape.matmul(vars.w2, l1), vars.b2), pool);
  const Var gate = tape.sigmoid(tape.add(tape.matmul(vars.wg, l1), vars.bg));
  const Var l2 = highway(tape, l1, t2, gate);
  return tape.maxout(tape.add(tape.matmul(vars.w3, l2), vars.b3), pool);  // shape {1}
}

std::array<int, kBlockSize> greedy_pointers(const PointerScores& scores, bool mask) {
  const std::size_t n = scores.candidates();
  std::array<int, kBlockSize> out{};
  for (std::size_t k = 0; k < kBlockSize; ++k) {
    int best = -1;
    for (std::size_t t = 0; t < n; ++t) {
      if (mask) {
        bool taken = false;
        for (std::size_t prev = 0; prev < k; ++prev) taken = taken || out[prev] == static_cast<int>(t);
        if (taken) continue;
      }
      if (best < 0 || scores.col[k][t] > scores.col[k][static_cast<std::size_t>(best)])
        best = static_cast<int>(t);  // strict > keeps the lowest index on ties
    }
    out[k] = best;
  }
  return out;
}

}  // namespace

void register_decoder_params(ParamStore& store, const DecoderConfig& config, std::size_t d_e,
                             Rng& rng) {
  const std::size_t h = config.lstm_hidden_dim;
  const std::size_t dr = config.hmn_hidden_dim;
  const std::size_t p = config.maxout_pool;
  const std::size_t lstm_in = kBlockSize * d_e;
  // State-coupling weights start small so the decoder begins near the
  // memoryless regime: pointer selections are stable across iterations
  // from the first step and the summed per-iteration loss stays smooth.
  const double state_scale = 0.2;
  const double lstm_std = state_scale / std::sqrt(static_cast<double>(lstm_in + h));
  for (const char* gate : {"i", "f", "o", "g"}) {
    store.create_normal(std::string("decoder.lstm.w") + gate, {h, lstm_in}, lstm_std, rng);
    store.create_normal(std::string("decoder.lstm.u") + gate, {h, h}, lstm_std, rng);
    store.create(std::string("decoder.lstm.b") + gate, Tensor::zeros({h}));
  }
  const std::size_t state_in = h + kBlockSize * d_e;
  for (std::size_t k = 0; k < kBlockSize; ++k) {
    const std::string prefix = hmn_prefix(k);
    store.create_normal(prefix + "u", {dr, state_in},
                        state_scale / std::sqrt(static_cast<double>(state_in)), rng);
    store.create_normal(prefix + "w1", {dr * p, d_e + dr}, 1.0 / std::sqrt(static_cast<double>(d_e + dr)), rng);
    store.create(prefix + "b1", Tensor::zeros({dr * p}));
    store.create_normal(prefix + "w2", {dr * p, dr}, 1.0 / std::sqrt(static_cast<double>(dr)), rng);
    store.create(prefix + "b2", Tensor::zeros({dr * p}));
    store.create_normal(prefix + "wg", {dr, dr}, 1.0 / std::sqrt(static_cast<double>(dr)), rng);
    store.create(prefix + "bg", Tensor::zeros({dr}));
    store.create_normal(prefix + "w3", {p, dr}, 1.0 / std::sqrt(static_cast<double>(dr)), rng);
    store.create(prefix + "b3", Tensor::zeros({p}));
  }
}

DecoderVars decoder_vars(Tape& tape, ParamStore& store) {
  DecoderVars vars;
  vars.lstm = LstmVars{
      tape.param(store.at("decoder.lstm.wi")), tape.param(store.at("decoder.lstm.ui")),
      tape.param(store.at("decoder.lstm.bi")), tape.param(store.at("decoder.lstm.wf")),
      tape.param(store.at("decoder.lstm.uf")), tape.param(store.at("decoder.lstm.bf")),
      tape.param(store.at("decoder.lstm.wo")), tape.param(store.at("decoder.lstm.uo")),
      tape.param(store.at("decoder.lstm.bo")), tape.param(store.at("decoder.lstm.wg")),
      tape.param(store.at("decoder.lstm.ug")), tape.param(store.at("decoder.lstm.bg")),
  };
  for (std::size_t k = 0; k < kBlockSize; ++k) {
    const std::string prefix = hmn_prefix(k);
    vars.hmn[k] = HmnVars{
        tape.param(store.at(prefix + "u")),  tape.param(store.at(prefix + "w1")),
        tape.param(store.at(prefix + "b1")), tape.param(store.at(prefix + "w2")),
        tape.param(store.at(prefix + "b2")), tape.param(store.at(prefix + "wg")),
        tape.param(store.at(prefix + "bg")), tape.param(store.at(prefix + "w3")),
        tape.param(store.at(prefix + "b3")),
    };
  }
  return vars;
}

DecoderState initial_decoder_state(Tape& tape, const DecoderConfig& config, std::size_t d_e) {
  DecoderState state;
  state.h = tape.zeros({config.lstm_hidden_dim});
  state.c = tape.zeros({config.lstm_hidden_dim});
  state.prev_pointers.fill(0);
  for (auto& e : state.prev_embeddings) e = tape.zeros({d_e});
  return state;
}

Var hmn_score(Tape& tape, const HmnVars& vars, Var e_t, Var h,
              const std::array<Var, kBlockSize>& prev_embeddings, std::size_t maxout_pool) {
  const Var state_cat = tape.concat({h, prev_embeddings[0], prev_embeddings[1], prev_embeddings[2],
                                     prev_embeddings[3]});
  const Var r = tape.tanh(tape.matmul(vars.u, state_cat));
  return hmn_from_r(tape, vars, e_t, r, maxout_pool);
}

DecodeStepResult decode_step(Tape& tape, const DecoderVars& vars, const std::vector<Var>& embeddings,
                             const DecoderState& state, const DecoderConfig& config) {
  const std::size_t n = embeddings.size();
  if (n < kBlockSize)
    throw contract_error("decode needs at least 4 candidates, got " + std::to_string(n));

  const Var x = tape.concat({state.prev_embeddings[0], state.prev_embeddings[1],
                             state.prev_embeddings[2], state.prev_embeddings[3]});
  const LstmStep lstm = lstm_cell(tape, x, state.h, state.c, vars.lstm);

  DecodeStepResult result;
  const Var state_cat = tape.concat({lstm.h, state.prev_embeddings[0], state.prev_embeddings[1],
                                     state.prev_embeddings[2], state.prev_embeddings[3]});
  for (std::size_t k = 0; k < kBlockSize; ++k) {
    // The state projection r does not depend on the candidate; compute it
    // once per pointer.
    const Var r = tape.tanh(tape.matmul(vars.hmn[k].u, state_cat));
    std::vector<Var> alphas;
    alphas.reserve(n);
    for (std::size_t t = 0; t < n; ++t)
      alphas.push_back(hmn_from_r(tape, vars.hmn[k], embeddings[t], r, config.maxout_pool));
    result.alpha[k] = tape.concat(alphas);
    result.scores.col[k] = tape.value(result.alpha[k]).values;
  }

  result.pointers = greedy_pointers(result.scores, config.mask_within_iteration);
  result.state.h = lstm.h;
  result.state.c = lstm.c;
  result.state.prev_pointers = result.pointers;
  for (std::size_t k = 0; k < kBlockSize; ++k)
    result.state.prev_embeddings[k] = embeddings[static_cast<std::size_t>(result.pointers[k])];
  return result;
}

SampledPointers sample_pointers(const PointerScores& scores, double temperature, Rng& rng) {
  if (temperature <= 0.0)
    throw contract_error("sample_pointers needs temperature > 0, got " + std::to_string(temperature));
  const std::size_t n = scores.candidates();
  SampledPointers out;
  for (std::size_t k = 0; k < kBlockSize; ++k) {
    std::vector<double> scaled(n);
    for (std::size_t t = 0; t < n; ++t) {
      if (!std::isfinite(scores.col[k][t]))
        throw contract_error("sample_pointers given a non-finite score");
      scaled[t] = scores.col[k][t] / temperature;
    }
    const std::vector<double> probs = softmax(scaled);
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t pick = n - 1;
    for (std::size_t t = 0; t < n; ++t) {
      acc += probs[t];
      if (u < acc) {
        pick = t;
        break;
      }
    }
    out.pointers[k] = static_cast<int>(pick);
    out.log_prob[k] = std::log(probs[pick]);
  }
  return out;
}

DecodeTrace decode(Tape& tape, const DecoderVars& vars, const std::vector<Var>& embeddings,
                   const DecoderConfig& config, Rng* sample_rng) {
  if (embeddings.empty()) throw contract_error("decode over an empty candidate set");
  const std::size_t d_e = tape.value(embeddings[0]).size();
  DecoderState state = initial_decoder_state(tape, config, d_e);

  DecodeTrace trace;
  for (std::size_t iter = 0; iter < config.max_iterations; ++iter) {
    DecodeStepResult step = decode_step(tape, vars, embeddings, state, config);
    IterationTrace it;
    it.scores = step.scores;
    it.alpha = step.alpha;
    it.greedy = step.pointers;
    if (sample_rng)
      it.sampled = sample_pointers(step.scores, config.sample_temperature, *sample_rng);
    trace.iterations.push_back(std::move(it));

    const bool converged = iter > 0 && step.pointers == state.prev_pointers;
    state = std::move(step.state);
    if (converged) break;
  }
  trace.iterations_used = trace.iterations.size();
  trace.final_pointers = trace.iterations.back().greedy;
  return trace;
}

std::string trace_to_string(const DecodeTrace& trace, std::int64_t query_id) {
  nlohmann::json iterations = nlohmann::json::array();
  for (const auto& it : trace.iterations) {
    nlohmann::json scores = nlohmann::json::array();
    for (const auto& col : it.scores.col) scores.push_back(col);
    nlohmann::json entry{{"scores", std::move(scores)}, {"greedy", it.greedy}};
    if (it.sampled) {
      entry["sampled"] = it.sampled->pointers;
      entry["sampled_log_prob"] = it.sampled->log_prob;
    }
    iterations.push_back(std::move(entry));
  }
  const nlohmann::json j{{"query_id", query_id},
                         {"iterations", std::move(iterations)},
                         {"iterations_used", trace.iterations_used},
                         {"final_pointers", trace.final_pointers}};
  return j.dump();
}

}  // namespace blockrec
