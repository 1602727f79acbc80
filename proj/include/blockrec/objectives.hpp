#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "blockrec/dataset.hpp"
#include "blockrec/decoder.hpp"
#include "blockrec/tape.hpp"

namespace blockrec {

// Gold block of one query as candidate indices, with the cluster ids and
// within-cluster ranks needed by the reward functions.
struct Labels {
  std::array<std::size_t, kBlockSize> y{};
  std::array<int, kBlockSize> y_clusters{};
  std::array<int, kBlockSize> y_ranks{};
};

Labels labels_from_example(const QueryExample& example);

// |gold set ∩ predicted set| / 4; duplicate predictions collapse.
double reward_overlap(const std::array<std::size_t, kBlockSize>& y,
                      const std::array<int, kBlockSize>& yp);

// unique clusters / 4.
double reward_diversity(const std::array<int, kBlockSize>& yp_clusters);

// Sum of reciprocal within-cluster ranks.
double reward_mrr(const std::array<int, kBlockSize>& yp_ranks);

struct StepRewards {
  double overlap = 0.0;
  double diversity = 0.0;
  double mrr = 0.0;
};

// Per-iteration rewards of the sampled pointers plus the self-critic
// baseline: the same rewards computed on the final greedy pointers.
struct RewardBundle {
  std::vector<StepRewards> per_step;
  StepRewards baseline;
};

RewardBundle compute_rewards(const DecodeTrace& trace, const QueryExample& example,
                             const Labels& labels);

// Summed cross entropy over every recorded iteration; pointer k targets
// the k-th label.
Var ce_loss(Tape& tape, const DecodeTrace& trace, const Labels& labels);

enum class RewardKind { overlap, diversity, mrr };

// Self-critic policy gradient: -(1/T) sum_t (R_t - R_baseline) * sum_k
// log pi(sampled pointer k). The advantage is a constant; gradients flow
// only through the log-probabilities.
Var rl_loss(Tape& tape, const DecodeTrace& trace, const RewardBundle& rewards, RewardKind kind,
            double temperature);

// Homoscedastic-uncertainty combination with s_i = log w_i^2:
// sum_i exp(-s_i)/2 * l_i + s_i. One scalar weight per active loss.
Var combine_losses(Tape& tape, std::span<const Var> losses, std::span<const Var> log_sq_weights);

// Objective names as used in configs and report rows: subsets of
// {"ce","f1","div","mrr"}, always containing "ce".
struct ObjectiveSet {
  bool overlap = false;
  bool diversity = false;
  bool mrr = false;

  std::size_t active_count() const { return 1 + overlap + diversity + mrr; }
  bool any_rl() const { return overlap || diversity || mrr; }
};

ObjectiveSet parse_objectives(const std::vector<std::string>& names);
std::string objectives_to_string(const ObjectiveSet& set);

}  // namespace blockrec
