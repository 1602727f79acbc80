#pragma once

#include <vector>

#include "blockrec/dataset.hpp"
#include "blockrec/param_store.hpp"
#include "blockrec/tape.hpp"

namespace blockrec {

// Query-aware suggestion embeddings. A two-layer pair network maps the
// concatenated [suggestion; query] features to an intermediate vector a,
// and a final projection squashes it: e = tanh(W a + b). Entries of e
// are therefore strictly inside (-1, 1).
struct EncoderConfig {
  std::size_t d_raw = 32;  // raw feature dimension of queries and suggestions
  std::size_t d_a = 64;    // intermediate representation width
  std::size_t d_e = 32;    // embedding width
};

// Registers encoder.* parameters (pair net W1/b1/W2/b2, projection W/b).
void register_encoder_params(ParamStore& store, const EncoderConfig& config, Rng& rng);

// Tape handles for the encoder parameters of one forward pass.
struct EncoderVars {
  Var w1, b1, w2, b2, w, b;
};

EncoderVars encoder_vars(Tape& tape, ParamStore& store);

// e = tanh(W * pair_net([suggestion; query]) + b)
Var encode_pair(Tape& tape, const EncoderVars& vars, const std::vector<double>& query_features,
                const std::vector<double>& suggestion_features);

// Embeddings for every candidate, in candidate order.
std::vector<Var> encode_all(Tape& tape, const EncoderVars& vars, const QueryExample& example);

}  // namespace blockrec
