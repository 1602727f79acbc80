#include "blockrec/mmr.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "blockrec/errors.hpp"
#include "blockrec/kernels.hpp"

namespace blockrec {

void register_classifier_params(ParamStore& store, const EncoderConfig& config, Rng& rng) {
  register_encoder_params(store, config, rng);
  store.create_normal("classifier.out.w", {1, config.d_e},
                      1.0 / std::sqrt(static_cast<double>(config.d_e)), rng);
  store.create("classifier.out.b", Tensor::zeros({1}));
}

Var classifier_logit(Tape& tape, const EncoderVars& enc, Var out_w, Var out_b,
                     const std::vector<double>& query_features,
                     const std::vector<double>& suggestion_features) {
  const Var e = encode_pair(tape, enc, query_features, suggestion_features);
  return tape.add(tape.matmul(out_w, e), out_b);
}

namespace {

double mean_pair_loss(const std::vector<QueryExample>& corpus,
                      std::span<const std::size_t> indices, ParamStore& store) {
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t idx : indices) {
    const auto& ex = corpus[idx];
    Tape tape;
    const EncoderVars enc = encoder_vars(tape, store);
    const Var w = tape.param(store.at("classifier.out.w"));
    const Var b = tape.param(store.at("classifier.out.b"));
    for (const auto& cand : ex.candidates) {
      const bool positive = std::find(ex.labels.begin(), ex.labels.end(), cand.suggestion_id) !=
                            ex.labels.end();
      const Var loss = tape.bce_with_logit(
          classifier_logit(tape, enc, w, b, ex.query_features, cand.features), positive ? 1.0 : 0.0);
      total += tape.value(loss).values[0];
      ++pairs;
    }
  }
  return pairs ? total / static_cast<double>(pairs) : 0.0;
}

}  // namespace

ClassifierTrainStats train_classifier(const std::vector<QueryExample>& corpus,
                                      std::span<const std::size_t> train_indices,
                                      ParamStore& store, const EncoderConfig&,
                                      const ClassifierTrainConfig& config) {
  ClassifierTrainStats stats;
  stats.initial_loss = mean_pair_loss(corpus, train_indices, store);

  AdamConfig adam;
  adam.lr = config.lr;
  AdamState adam_state;
  Rng rng(config.seed);
  std::vector<std::size_t> order(train_indices.begin(), train_indices.end());

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t idx : order) {
      const auto& ex = corpus[idx];
      store.zero_grads();
      Tape tape;
      const EncoderVars enc = encoder_vars(tape, store);
      const Var w = tape.param(store.at("classifier.out.w"));
      const Var b = tape.param(store.at("classifier.out.b"));
      Var total;
      for (const auto& cand : ex.candidates) {
        const bool positive = std::find(ex.labels.begin(), ex.labels.end(), cand.suggestion_id) !=
                              ex.labels.end();
        const Var loss = tape.bce_with_logit(
            classifier_logit(tape, enc, w, b, ex.query_features, cand.features),
            positive ? 1.0 : 0.0);
        total = total.valid() ? tape.add(total, loss) : loss;
      }
      tape.backward(tape.scale(total, 1.0 / static_cast<double>(ex.candidates.size())));
      adam_step(store, adam, adam_state);
    }
  }

  stats.final_loss = mean_pair_loss(corpus, train_indices, store);
  std::size_t correct = 0, pairs = 0;
  for (std::size_t idx : train_indices) {
    const auto& ex = corpus[idx];
    const auto scores = classifier_scores(ex, store);
    for (std::size_t i = 0; i < ex.candidates.size(); ++i) {
      const bool positive = std::find(ex.labels.begin(), ex.labels.end(),
                                      ex.candidates[i].suggestion_id) != ex.labels.end();
      correct += (scores[i] >= 0.5) == positive;
      ++pairs;
    }
  }
  stats.train_accuracy = pairs ? static_cast<double>(correct) / static_cast<double>(pairs) : 0.0;
  return stats;
}

std::vector<double> classifier_scores(const QueryExample& example, ParamStore& store) {
  Tape tape;
  const EncoderVars enc = encoder_vars(tape, store);
  const Var w = tape.param(store.at("classifier.out.w"));
  const Var b = tape.param(store.at("classifier.out.b"));
  std::vector<double> scores;
  scores.reserve(example.candidates.size());
  for (const auto& cand : example.candidates) {
    const Var logit = classifier_logit(tape, enc, w, b, example.query_features, cand.features);
    scores.push_back(1.0 / (1.0 + std::exp(-tape.value(logit).values[0])));
  }
  return scores;
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size())
    throw dimension_error("cosine_similarity dimensions disagree: " + std::to_string(u.size()) +
                          " vs " + std::to_string(v.size()));
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return dot / (std::sqrt(nu) * std::sqrt(nv));
}

std::vector<std::size_t> mmr_rerank(const std::vector<double>& relevance,
                                    const std::vector<double>& sim, std::size_t n,
                                    const MmrConfig& config) {
  if (relevance.size() != n || sim.size() != n * n)
    throw dimension_error("mmr_rerank: relevance/similarity sizes do not match n");
  if (config.m > n)
    throw contract_error("mmr_rerank: cannot select " + std::to_string(config.m) + " of " +
                         std::to_string(n) + " candidates");
  std::vector<std::size_t> selected;
  std::vector<bool> taken(n, false);
  while (selected.size() < config.m) {
    std::size_t best = n;
    double best_score = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      if (taken[t]) continue;
      double score;
      if (selected.empty()) {
        score = relevance[t];  // first pick is pure relevance
      } else {
        double max_sim = -HUGE_VAL;
        for (std::size_t s : selected) max_sim = std::max(max_sim, sim[t * n + s]);
        score = config.gamma * relevance[t] - (1.0 - config.gamma) * max_sim;
      }
      if (best == n || score > best_score) {  // strict > keeps the lowest index on ties
        best = t;
        best_score = score;
      }
    }
    taken[best] = true;
    selected.push_back(best);
  }
  return selected;
}

PredictionRecord mmr_predict(const QueryExample& example, ParamStore& store,
                             const MmrConfig& config) {
  const std::size_t n = example.candidates.size();
  const std::size_t dim = example.candidates[0].features.size();
  std::vector<double> rows(n * dim);
  for (std::size_t i = 0; i < n; ++i)
    std::copy(example.candidates[i].features.begin(), example.candidates[i].features.end(),
              rows.begin() + static_cast<long>(i * dim));
  std::vector<double> sim(n * n);
  kernels::cosine_matrix_parallel(rows.data(), n, dim, sim.data());

  const std::vector<double> relevance = classifier_scores(example, store);
  const auto picked = mmr_rerank(relevance, sim, n, config);
  std::array<int, kBlockSize> pointers{};
  for (std::size_t k = 0; k < kBlockSize && k < picked.size(); ++k)
    pointers[k] = static_cast<int>(picked[k]);
  return prediction_from_pointers(example, pointers);
}

}  // namespace blockrec
