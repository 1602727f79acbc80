#include "blockrec/objectives.hpp"

#include <algorithm>
#include <set>

#include "blockrec/errors.hpp"

namespace blockrec {

Labels labels_from_example(const QueryExample& example) {
  Labels labels;
  for (std::size_t i = 0; i < kBlockSize; ++i) {
    const auto it = std::find_if(example.candidates.begin(), example.candidates.end(),
                                 [&](const SuggestionRecord& rec) {
                                   return rec.suggestion_id == example.labels[i];
                                 });
    if (it == example.candidates.end())
      throw contract_error("label id " + std::to_string(example.labels[i]) +
                           " not among candidates of query " + std::to_string(example.query_id));
    labels.y[i] = static_cast<std::size_t>(it - example.candidates.begin());
    labels.y_clusters[i] = it->cluster_id;
    labels.y_ranks[i] = it->rank_in_cluster;
  }
  return labels;
}

double reward_overlap(const std::array<std::size_t, kBlockSize>& y,
                      const std::array<int, kBlockSize>& yp) {
  const std::set<int> predicted(yp.begin(), yp.end());
  std::size_t hits = 0;
  for (std::size_t idx : y) hits += predicted.count(static_cast<int>(idx));
  return static_cast<double>(hits) / static_cast<double>(kBlockSize);
}

double reward_diversity(const std::array<int, kBlockSize>& yp_clusters) {
  const std::set<int> unique(yp_clusters.begin(), yp_clusters.end());
  return static_cast<double>(unique.size()) / static_cast<double>(kBlockSize);
}

double reward_mrr(const std::array<int, kBlockSize>& yp_ranks) {
  double sum = 0.0;
  for (int rank : yp_ranks) {
    if (rank < 1) throw contract_error("reward_mrr needs ranks >= 1, got " + std::to_string(rank));
    sum += 1.0 / static_cast<double>(rank);
  }
  return sum;
}

namespace {

StepRewards rewards_of(const std::array<int, kBlockSize>& pointers, const QueryExample& example,
                       const Labels& labels) {
  std::array<int, kBlockSize> clusters{}, ranks{};
  for (std::size_t k = 0; k < kBlockSize; ++k) {
    const auto& rec = example.candidates[static_cast<std::size_t>(pointers[k])];
    clusters[k] = rec.cluster_id;
    ranks[k] = rec.rank_in_cluster;
  }
  return StepRewards{reward_overlap(labels.y, pointers), reward_diversity(clusters),
                     reward_mrr(ranks)};
}

double pick(const StepRewards& r, RewardKind kind) {
  switch (kind) {
    case RewardKind::overlap:
      return r.overlap;
    case RewardKind::diversity:
      return r.diversity;
    case RewardKind::mrr:
      return r.mrr;
  }
  throw contract_error("unknown reward kind");
}

}  // namespace

RewardBundle compute_rewards(const DecodeTrace& trace, const QueryExample& example,
                             const Labels& labels) {
  RewardBundle bundle;
  bundle.per_step.reserve(trace.iterations.size());
  for (const auto& it : trace.iterations) {
    if (!it.sampled) throw contract_error("compute_rewards needs sampled pointers at every step");
    bundle.per_step.push_back(rewards_of(it.sampled->pointers, example, labels));
  }
  bundle.baseline = rewards_of(trace.final_pointers, example, labels);
  return bundle;
}

Var ce_loss(Tape& tape, const DecodeTrace& trace, const Labels& labels) {
  if (trace.iterations.empty()) throw contract_error("ce_loss over an empty trace");
  Var total;
  for (const auto& it : trace.iterations) {
    for (std::size_t k = 0; k < kBlockSize; ++k) {
      const Var term = tape.softmax_cross_entropy(it.alpha[k], labels.y[k]);
      total = total.valid() ? tape.add(total, term) : term;
    }
  }
  return total;
}

Var rl_loss(Tape& tape, const DecodeTrace& trace, const RewardBundle& rewards, RewardKind kind,
            double temperature) {
  if (rewards.per_step.size() != trace.iterations.size())
    throw contract_error("rl_loss: reward bundle does not match the trace");
  const double baseline = pick(rewards.baseline, kind);
  Var total;
  for (std::size_t t = 0; t < trace.iterations.size(); ++t) {
    const auto& it = trace.iterations[t];
    if (!it.sampled) throw contract_error("rl_loss needs sampled pointers and their log-probs");
    const double advantage = pick(rewards.per_step[t], kind) - baseline;
    // -advantage * sum_k log pi(sample_k) == advantage * sum_k ce(sample_k)
    Var step_nll;
    for (std::size_t k = 0; k < kBlockSize; ++k) {
      Var col = it.alpha[k];
      if (temperature != 1.0) col = tape.scale(col, 1.0 / temperature);
      const Var nll = tape.softmax_cross_entropy(col, static_cast<std::size_t>(it.sampled->pointers[k]));
      step_nll = step_nll.valid() ? tape.add(step_nll, nll) : nll;
    }
    const Var weighted = tape.scale(step_nll, advantage);
    total = total.valid() ? tape.add(total, weighted) : weighted;
  }
  return tape.scale(total, 1.0 / static_cast<double>(trace.iterations.size()));
}

Var combine_losses(Tape& tape, std::span<const Var> losses, std::span<const Var> log_sq_weights) {
  if (losses.empty() || losses.size() != log_sq_weights.size())
    throw contract_error("combine_losses needs one weight per loss");
  Var total;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    const Var s = log_sq_weights[i];
    const Var precision = tape.exp(tape.scale(s, -1.0));  // exp(-s) = 1/w^2
    const Var term = tape.add(tape.scale(tape.mul(precision, losses[i]), 0.5), s);
    total = total.valid() ? tape.add(total, term) : term;
  }
  return total;
}

ObjectiveSet parse_objectives(const std::vector<std::string>& names) {
  ObjectiveSet set;
  bool has_ce = false;
  for (const auto& name : names) {
    if (name == "ce")
      has_ce = true;
    else if (name == "f1")
      set.overlap = true;
    else if (name == "div")
      set.diversity = true;
    else if (name == "mrr")
      set.mrr = true;
    else
      throw contract_error("unknown objective \"" + name + "\" (expected ce, f1, div, mrr)");
  }
  if (!has_ce) throw contract_error("objective set must contain ce");
  return set;
}

std::string objectives_to_string(const ObjectiveSet& set) {
  std::string out = "ce";
  if (set.overlap) out += "+f1";
  if (set.mrr) out += "+mrr";
  if (set.diversity) out += "+div";
  return out;
}

}  // namespace blockrec
