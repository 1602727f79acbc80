#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "blockrec/gmm.hpp"

namespace blockrec {

// One candidate suggestion after the pipeline has run: cluster_id and
// rank_in_cluster are assigned by build_example.
struct SuggestionRecord {
  std::int64_t suggestion_id = 0;
  std::vector<double> features;
  double click_rate = 0.0;
  std::int64_t cooccurrence_count = 0;
  int cluster_id = -1;
  int rank_in_cluster = 0;  // 1 = highest click rate within its cluster
};

// A query with its candidate pool and the gold ordered block of 4
// suggestion ids (descending click rate, one per cluster).
struct QueryExample {
  std::int64_t query_id = 0;
  std::vector<double> query_features;
  std::int64_t impressions = 0;
  std::vector<SuggestionRecord> candidates;
  std::array<std::int64_t, 4> labels{};
};

// Raw generator output, before thresholding and clustering. latent_cluster
// is the generator's ground truth, used only for pipeline validation.
struct RawSuggestion {
  std::int64_t suggestion_id = 0;
  std::vector<double> features;
  double click_rate = 0.0;
  std::int64_t cooccurrence_count = 0;
  int latent_cluster = -1;
};

struct RawQueryLog {
  std::int64_t query_id = 0;
  std::vector<double> query_features;
  std::int64_t impressions = 0;
  std::vector<RawSuggestion> suggestions;
};

struct GeneratorConfig {
  std::size_t num_queries = 2000;
  double mean_candidates_per_query = 30.0;
  std::size_t d_raw = 32;
  std::size_t k = 8;
  std::int64_t min_cooccurrence = 5;
  std::int64_t min_impressions = 50;
  double click_noise = 0.02;
  double cluster_separation = 4.0;  // in units of the within-cluster stddev (1.0)
  double fail_fraction_cooccurrence = 0.08;
  double fail_fraction_impressions = 0.03;
  std::uint64_t seed = 1;
  std::size_t gmm_max_iter = 60;
  double gmm_tol = 1e-5;

  void validate() const;
};

// Synthetic click logs: per query, candidates are drawn from k latent
// intent clusters placed around the query vector; click rate decays with
// distance to the query, scaled by a per-cluster popularity, plus noise.
// Deterministic per (config, seed): each query uses its own derived
// stream, so generation order (and threading) cannot change the corpus.
std::vector<RawQueryLog> generate_corpus(const GeneratorConfig& config);

struct BuildOutcome {
  std::optional<QueryExample> example;
  std::string reject_reason;  // "impressions", "candidates", or "clusters" when rejected
};

// Thresholds, cluster assignment under the fitted mixture, within-cluster
// click ranks, and the top-4-of-cluster-bests label block.
BuildOutcome build_example(const RawQueryLog& log, const GmmModel& gmm,
                           const GeneratorConfig& config);

// Candidates surviving the co-occurrence threshold (shared between the
// GMM fit and build_example so both see the same pool).
std::vector<const RawSuggestion*> filter_candidates(const RawQueryLog& log,
                                                    const GeneratorConfig& config);

// generate -> per-query GMM fit -> build, dropping rejected queries.
std::vector<QueryExample> build_corpus(const GeneratorConfig& config);

// Line-delimited JSON, one query per line.
void write_dataset(const std::string& path, const std::vector<QueryExample>& corpus);
std::vector<QueryExample> read_dataset(const std::string& path);

std::string dataset_to_string(const std::vector<QueryExample>& corpus);

// Deterministic 100:11:11 split: query ids are ordered by a seeded hash
// and partitioned so each set is within one query of its exact share.
struct SplitIndices {
  std::vector<std::size_t> train, validation, test;
};
SplitIndices split_corpus(const std::vector<QueryExample>& corpus, std::uint64_t seed);

// Type invariants, checked by build_example on every constructed example.
void validate_example(const QueryExample& example);

}  // namespace blockrec
