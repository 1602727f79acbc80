#include "blockrec/encoder.hpp"

#include <cmath>

#include "blockrec/errors.hpp"

namespace blockrec {

void register_encoder_params(ParamStore& store, const EncoderConfig& config, Rng& rng) {
  const auto std1 = 1.0 / std::sqrt(static_cast<double>(2 * config.d_raw));
  const auto std2 = 1.0 / std::sqrt(static_cast<double>(config.d_a));
  Param& w1 = store.create_normal("encoder.pair.w1", {config.d_a, 2 * config.d_raw}, std1, rng);
  // Seed half of the first-layer rows as difference projections
  // [r | -r]: suggestion relevance is relative to the query, and these
  // give gradient descent the subtractive structure from step one.
  for (std::size_t row = 0; row < config.d_a / 2; ++row)
    for (std::size_t d = 0; d < config.d_raw; ++d)
      w1.value.at(row, config.d_raw + d) = -w1.value.at(row, d);
  store.create("encoder.pair.b1", Tensor::zeros({config.d_a}));
  store.create_normal("encoder.pair.w2", {config.d_a, config.d_a}, std2, rng);
  store.create("encoder.pair.b2", Tensor::zeros({config.d_a}));
  store.create_normal("encoder.proj.w", {config.d_e, config.d_a}, std2, rng);
  store.create("encoder.proj.b", Tensor::zeros({config.d_e}));
}

EncoderVars encoder_vars(Tape& tape, ParamStore& store) {
  return EncoderVars{
      tape.param(store.at("encoder.pair.w1")), tape.param(store.at("encoder.pair.b1")),
      tape.param(store.at("encoder.pair.w2")), tape.param(store.at("encoder.pair.b2")),
      tape.param(store.at("encoder.proj.w")),  tape.param(store.at("encoder.proj.b")),
  };
}

Var encode_pair(Tape& tape, const EncoderVars& vars, const std::vector<double>& query_features,
                const std::vector<double>& suggestion_features) {
  if (query_features.size() != suggestion_features.size())
    throw dimension_error("encode_pair: query dim " + std::to_string(query_features.size()) +
                          " vs suggestion dim " + std::to_string(suggestion_features.size()));
  std::vector<double> joint;
  joint.reserve(2 * query_features.size());
  joint.insert(joint.end(), suggestion_features.begin(), suggestion_features.end());
  joint.insert(joint.end(), query_features.begin(), query_features.end());
  Var x = tape.constant(Tensor::row_vector(std::move(joint)));
  Var hidden = tape.tanh(tape.add(tape.matmul(vars.w1, x), vars.b1));
  Var a = tape.add(tape.matmul(vars.w2, hidden), vars.b2);
  return tape.tanh(tape.add(tape.matmul(vars.w, a), vars.b));
}

std::vector<Var> encode_all(Tape& tape, const EncoderVars& vars, const QueryExample& example) {
  std::vector<Var> out;
  out.reserve(example.candidates.size());
  for (const auto& candidate : example.candidates)
    out.push_back(encode_pair(tape, vars, example.query_features, candidate.features));
  return out;
}

}  // namespace blockrec
