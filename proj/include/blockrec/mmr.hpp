#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "blockrec/dataset.hpp"
#include "blockrec/encoder.hpp"
#include "blockrec/evaluation.hpp"
#include "blockrec/param_store.hpp"

namespace blockrec {

// Pairwise binary-classifier baseline: the shared encoder followed by a
// single output logit, trained with binary cross entropy on (query,
// candidate) pairs labelled by gold-block membership. Classifier scores
// feed maximal marginal relevance reordering.
struct MmrConfig {
  double gamma = 0.6;  // relevance weight; 1 - gamma weighs the similarity penalty
  std::size_t m = kBlockSize;
};

// encoder.* plus classifier.out.{w,b}.
void register_classifier_params(ParamStore& store, const EncoderConfig& config, Rng& rng);

Var classifier_logit(Tape& tape, const EncoderVars& enc, Var out_w, Var out_b,
                     const std::vector<double>& query_features,
                     const std::vector<double>& suggestion_features);

struct ClassifierTrainConfig {
  std::size_t epochs = 3;
  double lr = 1e-3;
  std::uint64_t seed = 1;
};

struct ClassifierTrainStats {
  double initial_loss = 0.0;  // mean pair loss before training
  double final_loss = 0.0;
  double train_accuracy = 0.0;
};

// One Adam step per query (summed pair losses); natural label skew, no
// reweighting.
ClassifierTrainStats train_classifier(const std::vector<QueryExample>& corpus,
                                      std::span<const std::size_t> train_indices,
                                      ParamStore& store, const EncoderConfig& enc_config,
                                      const ClassifierTrainConfig& config);

// Relevance scores (sigmoid of the logit) for every candidate of one query.
std::vector<double> classifier_scores(const QueryExample& example, ParamStore& store);

// u.v / (|u||v|); zero vectors have similarity 0 by convention.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

// Greedy MMR: first pick is the pure relevance argmax, each later pick
// maximizes gamma*relevance - (1-gamma)*max similarity to the already
// selected. Ties break to the lowest index.
std::vector<std::size_t> mmr_rerank(const std::vector<double>& relevance,
                                    const std::vector<double>& sim, std::size_t n,
                                    const MmrConfig& config);

// Full baseline prediction for one query: classifier scores + cosine
// similarity over raw suggestion features + MMR.
PredictionRecord mmr_predict(const QueryExample& example, ParamStore& store,
                             const MmrConfig& config);

}  // namespace blockrec
