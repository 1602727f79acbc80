#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "blockrec/objectives.hpp"

namespace blockrec {

// One query's predicted block with the cluster ids and ranks of the
// predicted candidates.
struct PredictionRecord {
  std::int64_t query_id = 0;
  std::array<int, kBlockSize> yp{};
  std::array<int, kBlockSize> yp_clusters{};
  std::array<int, kBlockSize> yp_ranks{};
};

PredictionRecord prediction_from_pointers(const QueryExample& example,
                                          const std::array<int, kBlockSize>& pointers);

struct QueryMetrics {
  double div = 0.0;
  double recall = 0.0;
  double p1 = 0.0;
  double em = 0.0;
};

// div = unique predicted clusters / 4; recall = |Y ∩ Yp| / 4;
// p1 = [yp[0] == y[0]]; em = [yp == y elementwise].
QueryMetrics query_metrics(const PredictionRecord& pred, const Labels& gold);

struct MetricsReport {
  double div_score = 0.0;
  double recall = 0.0;
  double p_at_1 = 0.0;
  double em = 0.0;
  std::vector<std::pair<std::int64_t, QueryMetrics>> per_query;
  // Run metadata.
  std::string objectives;
  std::uint64_t seed = 0;
  std::string config_hash;
};

// Unweighted means over the per-query metrics.
MetricsReport aggregate(const std::vector<std::pair<std::int64_t, QueryMetrics>>& records);

std::string report_to_string(const MetricsReport& report, bool include_per_query = true);
void write_report(const std::string& path, const MetricsReport& report);

}  // namespace blockrec
