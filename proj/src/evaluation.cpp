#include "blockrec/evaluation.hpp"

#include <fstream>

#include "json.hpp"

#include "blockrec/errors.hpp"

namespace blockrec {

PredictionRecord prediction_from_pointers(const QueryExample& example,
                                          const std::array<int, kBlockSize>& pointers) {
  PredictionRecord pred;
  pred.query_id = example.query_id;
  pred.yp = pointers;
  for (std::size_t k = 0; k < kBlockSize; ++k) {
    const auto& rec = example.candidates.at(static_cast<std::size_t>(pointers[k]));
    pred.yp_clusters[k] = rec.cluster_id;
    pred.yp_ranks[k] = rec.rank_in_cluster;
  }
  return pred;
}

QueryMetrics query_metrics(const PredictionRecord& pred, const Labels& gold) {
  QueryMetrics m;
  m.div = reward_diversity(pred.yp_clusters);
  m.recall = reward_overlap(gold.y, pred.yp);
  m.p1 = pred.yp[0] == static_cast<int>(gold.y[0]) ? 1.0 : 0.0;
  bool exact = true;
  for (std::size_t k = 0; k < kBlockSize; ++k)
    exact = exact && pred.yp[k] == static_cast<int>(gold.y[k]);
  m.em = exact ? 1.0 : 0.0;
  return m;
}

MetricsReport aggregate(const std::vector<std::pair<std::int64_t, QueryMetrics>>& records) {
  if (records.empty()) throw contract_error("aggregate over an empty record set");
  MetricsReport report;
  for (const auto& [query_id, m] : records) {
    report.div_score += m.div;
    report.recall += m.recall;
    report.p_at_1 += m.p1;
    report.em += m.em;
  }
  const auto n = static_cast<double>(records.size());
  report.div_score /= n;
  report.recall /= n;
  report.p_at_1 /= n;
  report.em /= n;
  report.per_query = records;
  return report;
}

std::string report_to_string(const MetricsReport& report, bool include_per_query) {
  nlohmann::json j{{"div_score", report.div_score},
                   {"recall", report.recall},
                   {"p_at_1", report.p_at_1},
                   {"em", report.em},
                   {"metadata",
                    {{"objectives", report.objectives},
                     {"seed", report.seed},
                     {"config_hash", report.config_hash},
                     {"queries", report.per_query.size()}}}};
  if (include_per_query) {
    nlohmann::json per_query = nlohmann::json::array();
    for (const auto& [query_id, m] : report.per_query)
      per_query.push_back({{"query_id", query_id},
                           {"div", m.div},
                           {"recall", m.recall},
                           {"p_at_1", m.p1},
                           {"em", m.em}});
    j["per_query"] = std::move(per_query);
  }
  return j.dump(2);
}

void write_report(const std::string& path, const MetricsReport& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw parse_error("cannot open report for writing: " + path);
  out << report_to_string(report) << '\n';
  if (!out) throw parse_error("failed writing report: " + path);
}

}  // namespace blockrec
