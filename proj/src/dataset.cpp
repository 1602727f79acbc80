#include "blockrec/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

#include "blockrec/errors.hpp"
#include "blockrec/rng.hpp"

namespace blockrec {

using nlohmann::json;

void GeneratorConfig::validate() const {
  if (num_queries == 0) throw contract_error("generator: num_queries must be positive");
  if (mean_candidates_per_query < 4.0)
    throw contract_error("generator: mean_candidates_per_query must be at least 4");
  if (d_raw == 0) throw contract_error("generator: d_raw must be positive");
  if (k < 4) throw contract_error("generator: k must be at least 4 (labels need 4 clusters)");
  if (min_cooccurrence < 1) throw contract_error("generator: min_cooccurrence must be positive");
  if (min_impressions < 1) throw contract_error("generator: min_impressions must be positive");
  if (click_noise < 0.0) throw contract_error("generator: click_noise must be non-negative");
  if (cluster_separation < 0.0) throw contract_error("generator: cluster_separation must be non-negative");
  if (fail_fraction_cooccurrence < 0.0 || fail_fraction_cooccurrence >= 1.0 ||
      fail_fraction_impressions < 0.0 || fail_fraction_impressions >= 1.0)
    throw contract_error("generator: fail fractions must lie in [0, 1)");
}

namespace {

std::size_t sample_poisson(double mean, Rng& rng) {
  const double limit = std::exp(-mean);
  std::size_t k = 0;
  double p = 1.0;
  do {
    ++k;
    p *= rng.uniform();
  } while (p > limit);
  return k - 1;
}

std::int64_t sample_count(std::int64_t threshold, double fail_fraction, Rng& rng) {
  if (rng.uniform() < fail_fraction)
    return static_cast<std::int64_t>(rng.uniform_index(static_cast<std::size_t>(threshold)));
  const auto span = static_cast<std::size_t>(threshold * 9 + 1);
  return threshold + static_cast<std::int64_t>(rng.uniform_index(span));
}

RawQueryLog generate_query(std::int64_t query_id, const GeneratorConfig& cfg, Rng qrng) {
  RawQueryLog log;
  log.query_id = query_id;
  log.query_features = qrng.normal_vector(cfg.d_raw);
  log.impressions = sample_count(cfg.min_impressions, cfg.fail_fraction_impressions, qrng);

  // Latent intent clusters around the query; within-cluster stddev is 1.
  std::vector<std::vector<double>> centers(cfg.k);
  for (auto& c : centers) {
    c = qrng.normal_vector(cfg.d_raw, 0.0, cfg.cluster_separation);
    for (std::size_t d = 0; d < cfg.d_raw; ++d) c[d] += log.query_features[d];
  }

  // Cluster popularity follows intent proximity: the cluster whose center
  // sits closest to the query is the most clicked (1.0), the farthest
  // gets 0.25. Ties cannot occur (continuous distances).
  std::vector<double> center_dist(cfg.k, 0.0);
  for (std::size_t j = 0; j < cfg.k; ++j)
    for (std::size_t d = 0; d < cfg.d_raw; ++d) {
      const double diff = centers[j][d] - log.query_features[d];
      center_dist[j] += diff * diff;
    }
  std::vector<std::size_t> order(cfg.k);
  for (std::size_t j = 0; j < cfg.k; ++j) order[j] = j;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return center_dist[a] < center_dist[b]; });
  std::vector<double> popularity(cfg.k);
  for (std::size_t r = 0; r < cfg.k; ++r)
    popularity[order[r]] =
        cfg.k == 1 ? 1.0 : 0.25 + 0.75 * static_cast<double>(cfg.k - 1 - r) / static_cast<double>(cfg.k - 1);

  std::size_t n = sample_poisson(cfg.mean_candidates_per_query, qrng);
  n = std::max<std::size_t>(n, 6);

  // Click rate length scale: typical squared distance to the query is
  // d_raw*(1+sep^2); a fraction of it keeps the proximity signal visible
  // in the rates.
  const double length_sq =
      0.15 * static_cast<double>(cfg.d_raw) * (1.0 + cfg.cluster_separation * cfg.cluster_separation);

  // Emitted features are scaled to roughly unit per-dimension variance
  // (the real sentence embeddings they stand in for are unit-scale);
  // clicks are computed from the unscaled latent distances.
  const double feature_scale =
      1.0 / std::sqrt(1.0 + cfg.cluster_separation * cfg.cluster_separation);

  log.suggestions.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    RawSuggestion s;
    s.suggestion_id = query_id * 100000 + static_cast<std::int64_t>(i);
    s.latent_cluster = static_cast<int>(qrng.uniform_index(cfg.k));
    s.features = qrng.normal_vector(cfg.d_raw);
    double dist_sq = 0.0;
    for (std::size_t d = 0; d < cfg.d_raw; ++d) {
      s.features[d] += centers[static_cast<std::size_t>(s.latent_cluster)][d];
      const double diff = s.features[d] - log.query_features[d];
      dist_sq += diff * diff;
    }
    double click = popularity[static_cast<std::size_t>(s.latent_cluster)] *
                   std::exp(-dist_sq / (2.0 * length_sq));
    // Multiplicative noise keeps the perturbation proportional to the rate.
    if (cfg.click_noise > 0.0) click *= std::max(0.05, 1.0 + cfg.click_noise * qrng.normal());
    s.click_rate = std::min(1.0, std::max(1e-9, click));
    s.cooccurrence_count = sample_count(cfg.min_cooccurrence, cfg.fail_fraction_cooccurrence, qrng);
    for (auto& f : s.features) f *= feature_scale;
    log.suggestions.push_back(std::move(s));
  }
  for (auto& f : log.query_features) f *= feature_scale;
  return log;
}

}  // namespace

std::vector<RawQueryLog> generate_corpus(const GeneratorConfig& config) {
  config.validate();
  const Rng base(config.seed);
  std::vector<RawQueryLog> logs(config.num_queries);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(config.num_queries); ++i) {
    const std::int64_t query_id = i + 1;
    logs[static_cast<std::size_t>(i)] =
        generate_query(query_id, config, base.fork(static_cast<std::uint64_t>(query_id)));
  }
  return logs;
}

std::vector<const RawSuggestion*> filter_candidates(const RawQueryLog& log,
                                                    const GeneratorConfig& config) {
  std::vector<const RawSuggestion*> out;
  out.reserve(log.suggestions.size());
  for (const auto& s : log.suggestions)
    if (s.cooccurrence_count >= config.min_cooccurrence) out.push_back(&s);
  return out;
}

BuildOutcome build_example(const RawQueryLog& log, const GmmModel& gmm,
                           const GeneratorConfig& config) {
  if (log.impressions < config.min_impressions) return {std::nullopt, "impressions"};
  const auto kept = filter_candidates(log, config);
  if (kept.size() < 4) return {std::nullopt, "candidates"};

  QueryExample ex;
  ex.query_id = log.query_id;
  ex.query_features = log.query_features;
  ex.impressions = log.impressions;
  ex.candidates.reserve(kept.size());
  for (const auto* raw : kept) {
    SuggestionRecord rec;
    rec.suggestion_id = raw->suggestion_id;
    rec.features = raw->features;
    rec.click_rate = raw->click_rate;
    rec.cooccurrence_count = raw->cooccurrence_count;
    rec.cluster_id = static_cast<int>(gmm_assign(gmm, raw->features));
    ex.candidates.push_back(std::move(rec));
  }

  // Within-cluster ranks by descending click rate; ties rank the lower
  // suggestion_id better.
  std::map<int, std::vector<SuggestionRecord*>> by_cluster;
  for (auto& rec : ex.candidates) by_cluster[rec.cluster_id].push_back(&rec);
  for (auto& [cluster, members] : by_cluster) {
    std::sort(members.begin(), members.end(), [](const SuggestionRecord* a, const SuggestionRecord* b) {
      if (a->click_rate != b->click_rate) return a->click_rate > b->click_rate;
      return a->suggestion_id < b->suggestion_id;
    });
    for (std::size_t r = 0; r < members.size(); ++r)
      members[r]->rank_in_cluster = static_cast<int>(r + 1);
  }
  if (by_cluster.size() < 4) return {std::nullopt, "clusters"};

  std::vector<const SuggestionRecord*> bests;
  for (const auto& [cluster, members] : by_cluster) bests.push_back(members.front());
  std::sort(bests.begin(), bests.end(), [](const SuggestionRecord* a, const SuggestionRecord* b) {
    if (a->click_rate != b->click_rate) return a->click_rate > b->click_rate;
    return a->suggestion_id < b->suggestion_id;
  });
  for (std::size_t i = 0; i < 4; ++i) ex.labels[i] = bests[i]->suggestion_id;

  validate_example(ex);
  return {std::move(ex), ""};
}

std::vector<QueryExample> build_corpus(const GeneratorConfig& config) {
  const auto logs = generate_corpus(config);
  std::vector<BuildOutcome> outcomes(logs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(logs.size()); ++i) {
    const auto& log = logs[static_cast<std::size_t>(i)];
    if (log.impressions < config.min_impressions) {
      outcomes[static_cast<std::size_t>(i)] = {std::nullopt, "impressions"};
      continue;
    }
    const auto kept = filter_candidates(log, config);
    if (kept.size() < 4) {
      outcomes[static_cast<std::size_t>(i)] = {std::nullopt, "candidates"};
      continue;
    }
    std::vector<std::vector<double>> feats;
    feats.reserve(kept.size());
    for (const auto* s : kept) feats.push_back(s->features);
    std::uint64_t sm = config.seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(log.query_id));
    const GmmModel gmm = fit_gmm(feats, config.k, config.gmm_max_iter, config.gmm_tol, splitmix64(sm));
    outcomes[static_cast<std::size_t>(i)] = build_example(log, gmm, config);
  }
  std::vector<QueryExample> corpus;
  corpus.reserve(logs.size());
  for (auto& o : outcomes)
    if (o.example) corpus.push_back(std::move(*o.example));
  return corpus;
}

void validate_example(const QueryExample& ex) {
  if (ex.candidates.size() < 4)
    throw contract_error("example " + std::to_string(ex.query_id) + ": fewer than 4 candidates");
  std::map<std::int64_t, const SuggestionRecord*> by_id;
  std::map<int, std::vector<int>> ranks_by_cluster;
  for (const auto& rec : ex.candidates) {
    if (!by_id.emplace(rec.suggestion_id, &rec).second)
      throw contract_error("example " + std::to_string(ex.query_id) + ": duplicate suggestion id");
    if (rec.cluster_id < 0)
      throw contract_error("example " + std::to_string(ex.query_id) + ": unassigned cluster id");
    ranks_by_cluster[rec.cluster_id].push_back(rec.rank_in_cluster);
  }
  for (auto& [cluster, ranks] : ranks_by_cluster) {
    std::sort(ranks.begin(), ranks.end());
    for (std::size_t r = 0; r < ranks.size(); ++r)
      if (ranks[r] != static_cast<int>(r + 1))
        throw contract_error("example " + std::to_string(ex.query_id) + ": ranks in cluster " +
                             std::to_string(cluster) + " are not contiguous from 1");
  }
  std::array<int, 4> label_clusters{};
  double prev_click = HUGE_VAL;
  for (std::size_t i = 0; i < 4; ++i) {
    auto it = by_id.find(ex.labels[i]);
    if (it == by_id.end())
      throw contract_error("example " + std::to_string(ex.query_id) + ": label id not in candidates");
    for (std::size_t j = 0; j < i; ++j)
      if (ex.labels[j] == ex.labels[i])
        throw contract_error("example " + std::to_string(ex.query_id) + ": duplicate label id");
    if (it->second->click_rate > prev_click)
      throw contract_error("example " + std::to_string(ex.query_id) + ": labels not ordered by click rate");
    prev_click = it->second->click_rate;
    label_clusters[i] = it->second->cluster_id;
  }
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i + 1; j < 4; ++j)
      if (label_clusters[i] == label_clusters[j])
        throw contract_error("example " + std::to_string(ex.query_id) + ": labels share a cluster");
}

namespace {

json example_to_json(const QueryExample& ex) {
  json candidates = json::array();
  for (const auto& rec : ex.candidates) {
    candidates.push_back({{"suggestion_id", rec.suggestion_id},
                          {"features", rec.features},
                          {"click_rate", rec.click_rate},
                          {"cooccurrence_count", rec.cooccurrence_count},
                          {"cluster_id", rec.cluster_id},
                          {"rank_in_cluster", rec.rank_in_cluster}});
  }
  return json{{"query_id", ex.query_id},
              {"query_features", ex.query_features},
              {"impressions", ex.impressions},
              {"candidates", std::move(candidates)},
              {"labels", ex.labels}};
}

QueryExample example_from_json(const json& j) {
  QueryExample ex;
  ex.query_id = j.at("query_id").get<std::int64_t>();
  ex.query_features = j.at("query_features").get<std::vector<double>>();
  ex.impressions = j.at("impressions").get<std::int64_t>();
  for (const auto& c : j.at("candidates")) {
    SuggestionRecord rec;
    rec.suggestion_id = c.at("suggestion_id").get<std::int64_t>();
    rec.features = c.at("features").get<std::vector<double>>();
    rec.click_rate = c.at("click_rate").get<double>();
    rec.cooccurrence_count = c.at("cooccurrence_count").get<std::int64_t>();
    rec.cluster_id = c.at("cluster_id").get<int>();
    rec.rank_in_cluster = c.at("rank_in_cluster").get<int>();
    ex.candidates.push_back(std::move(rec));
  }
  const auto labels = j.at("labels").get<std::vector<std::int64_t>>();
  if (labels.size() != 4) throw parse_error("labels must hold exactly 4 ids");
  std::copy(labels.begin(), labels.end(), ex.labels.begin());
  return ex;
}

}  // namespace

std::string dataset_to_string(const std::vector<QueryExample>& corpus) {
  std::ostringstream out;
  for (const auto& ex : corpus) out << example_to_json(ex).dump() << '\n';
  return out.str();
}

void write_dataset(const std::string& path, const std::vector<QueryExample>& corpus) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw parse_error("cannot open dataset for writing: " + path);
  out << dataset_to_string(corpus);
  if (!out) throw parse_error("failed writing dataset: " + path);
}

std::vector<QueryExample> read_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open dataset: " + path);
  std::vector<QueryExample> corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      QueryExample ex = example_from_json(j);
      validate_example(ex);
      corpus.push_back(std::move(ex));
    } catch (const json::exception& e) {
      throw parse_error(path + " line " + std::to_string(line_no) + ": " + e.what());
    } catch (const contract_error& e) {
      throw parse_error(path + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return corpus;
}

SplitIndices split_corpus(const std::vector<QueryExample>& corpus, std::uint64_t seed) {
  struct Keyed {
    std::uint64_t hash;
    std::int64_t query_id;
    std::size_t index;
  };
  std::vector<Keyed> keyed;
  keyed.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    std::uint64_t sm = seed ^ (0xd1b54a32d192ed03ULL * static_cast<std::uint64_t>(corpus[i].query_id));
    keyed.push_back({splitmix64(sm), corpus[i].query_id, i});
  }
  std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
    if (a.hash != b.hash) return a.hash < b.hash;
    return a.query_id < b.query_id;
  });
  const double total = static_cast<double>(corpus.size());
  const auto n_train = static_cast<std::size_t>(std::llround(total * 100.0 / 122.0));
  const auto n_val = std::min(corpus.size() - n_train,
                              static_cast<std::size_t>(std::llround(total * 11.0 / 122.0)));
  SplitIndices split;
  for (std::size_t pos = 0; pos < keyed.size(); ++pos) {
    if (pos < n_train)
      split.train.push_back(keyed[pos].index);
    else if (pos < n_train + n_val)
      split.validation.push_back(keyed[pos].index);
    else
      split.test.push_back(keyed[pos].index);
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.validation.begin(), split.validation.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

}  // namespace blockrec
