#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>

#include "doctest.h"

#include "blockrec/dataset.hpp"
#include "blockrec/errors.hpp"
#include "blockrec/gmm.hpp"
#include "blockrec/rng.hpp"

using namespace blockrec;

namespace {

std::vector<std::vector<double>> gaussian_cloud(const std::vector<double>& center, std::size_t n,
                                                Rng& rng) {
  std::vector<std::vector<double>> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto v = rng.normal_vector(center.size());
    for (std::size_t d = 0; d < center.size(); ++d) v[d] += center[d];
    out.push_back(std::move(v));
  }
  return out;
}

GeneratorConfig small_config() {
  GeneratorConfig cfg;
  cfg.num_queries = 30;
  cfg.mean_candidates_per_query = 20.0;
  cfg.d_raw = 8;
  cfg.k = 4;
  cfg.min_cooccurrence = 5;
  cfg.min_impressions = 50;
  cfg.seed = 7;
  return cfg;
}

}  // namespace

TEST_CASE("gmm with one component recovers the sample mean and variance") {
  Rng rng(3);
  auto cloud = gaussian_cloud({2.0, -1.0, 0.5}, 150, rng);
  const GmmModel model = fit_gmm(cloud, 1, 50, 1e-9, 1);
  REQUIRE(model.k == 1);
  std::vector<double> mean(3, 0.0), var(3, 0.0);
  for (const auto& v : cloud)
    for (std::size_t d = 0; d < 3; ++d) mean[d] += v[d];
  for (auto& m : mean) m /= static_cast<double>(cloud.size());
  for (const auto& v : cloud)
    for (std::size_t d = 0; d < 3; ++d) var[d] += (v[d] - mean[d]) * (v[d] - mean[d]);
  for (auto& s : var) s = std::max(kVarianceFloor, s / static_cast<double>(cloud.size()));
  for (std::size_t d = 0; d < 3; ++d) {
    CHECK(std::abs(model.means[0][d] - mean[d]) <= 1e-9);
    CHECK(std::abs(model.variances[0][d] - var[d]) <= 1e-9);
  }
  CHECK(model.mixture_weights[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("gmm recovers two well-separated clouds") {
  Rng rng(11);
  const std::vector<double> c1{0.0, 0.0, 0.0, 0.0};
  const std::vector<double> c2{20.0, 0.0, 0.0, 0.0};  // separation 20 sigma
  auto cloud = gaussian_cloud(c1, 1000, rng);
  auto cloud2 = gaussian_cloud(c2, 1000, rng);
  cloud.insert(cloud.end(), cloud2.begin(), cloud2.end());
  const GmmModel model = fit_gmm(cloud, 2, 100, 1e-8, 5);
  REQUIRE(model.k == 2);
  // Match components to generating means by distance.
  auto dist = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t d = 0; d < a.size(); ++d) s += (a[d] - b[d]) * (a[d] - b[d]);
    return std::sqrt(s);
  };
  const double d00 = dist(model.means[0], c1), d01 = dist(model.means[0], c2);
  const auto& m1 = d00 < d01 ? model.means[0] : model.means[1];
  const auto& m2 = d00 < d01 ? model.means[1] : model.means[0];
  CHECK(dist(m1, c1) < 0.1);
  CHECK(dist(m2, c2) < 0.1);
}

TEST_CASE("gmm log likelihood trace is non-decreasing") {
  Rng rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    auto cloud = gaussian_cloud(rng.normal_vector(5), 60, rng);
    auto extra = gaussian_cloud(rng.normal_vector(5), 60, rng);
    cloud.insert(cloud.end(), extra.begin(), extra.end());
    const GmmModel model = fit_gmm(cloud, 3, 60, 1e-7, static_cast<std::uint64_t>(trial));
    REQUIRE(model.log_likelihood_trace.size() >= 2);
    for (std::size_t i = 1; i < model.log_likelihood_trace.size(); ++i)
      CHECK(model.log_likelihood_trace[i] >=
            model.log_likelihood_trace[i - 1] - 1e-9 * std::abs(model.log_likelihood_trace[i - 1]));
  }
}

TEST_CASE("gmm falls back when there are fewer vectors than components") {
  std::vector<std::vector<double>> vectors = {{1.0, 1.0}, {1.0, 1.0}, {5.0, 5.0}};
  const GmmModel model = fit_gmm(vectors, 8, 20, 1e-6, 1);
  CHECK(model.requested_k == 8);
  CHECK(model.k == 2);  // two distinct vectors
}

TEST_CASE("gmm responsibilities sum to one") {
  Rng rng(23);
  auto cloud = gaussian_cloud({0, 0}, 50, rng);
  const GmmModel model = fit_gmm(cloud, 3, 30, 1e-6, 2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto resp = gmm_responsibilities(model, rng.normal_vector(2));
    CHECK(std::abs(std::accumulate(resp.begin(), resp.end(), 0.0) - 1.0) <= 1e-9);
  }
}

TEST_CASE("generator is byte-identical across runs with a fixed seed") {
  GeneratorConfig cfg = small_config();
  const auto corpus1 = build_corpus(cfg);
  const auto corpus2 = build_corpus(cfg);
  CHECK(dataset_to_string(corpus1) == dataset_to_string(corpus2));
  CHECK(!corpus1.empty());
}

TEST_CASE("noise-free click rates decrease with distance within a latent cluster") {
  GeneratorConfig cfg = small_config();
  cfg.click_noise = 0.0;
  const auto logs = generate_corpus(cfg);
  for (const auto& log : logs) {
    std::map<int, std::vector<const RawSuggestion*>> by_latent;
    for (const auto& s : log.suggestions) by_latent[s.latent_cluster].push_back(&s);
    for (auto& [cluster, members] : by_latent) {
      auto dist = [&](const RawSuggestion* s) {
        double acc = 0;
        for (std::size_t d = 0; d < s->features.size(); ++d) {
          const double diff = s->features[d] - log.query_features[d];
          acc += diff * diff;
        }
        return acc;
      };
      std::sort(members.begin(), members.end(),
                [&](const RawSuggestion* a, const RawSuggestion* b) { return dist(a) < dist(b); });
      for (std::size_t i = 1; i < members.size(); ++i)
        CHECK(members[i - 1]->click_rate > members[i]->click_rate);
    }
  }
}

TEST_CASE("fitted clusters agree with latent clusters at high separation") {
  GeneratorConfig cfg = small_config();
  cfg.num_queries = 40;
  cfg.cluster_separation = 10.0;
  cfg.k = 4;
  cfg.fail_fraction_cooccurrence = 0.0;
  cfg.fail_fraction_impressions = 0.0;
  const auto logs = generate_corpus(cfg);
  std::size_t agree = 0, total = 0;
  for (const auto& log : logs) {
    const auto kept = filter_candidates(log, cfg);
    std::vector<std::vector<double>> feats;
    for (const auto* s : kept) feats.push_back(s->features);
    if (feats.size() < 8) continue;
    const GmmModel gmm = fit_gmm(feats, cfg.k, 60, 1e-5, cfg.seed ^ static_cast<std::uint64_t>(log.query_id));
    if (gmm.k != 4) continue;
    std::vector<int> assigned;
    for (const auto& f : feats) assigned.push_back(static_cast<int>(gmm_assign(gmm, f)));
    // Best of the 4! latent->fitted permutations.
    std::array<int, 4> perm{0, 1, 2, 3};
    std::size_t best = 0;
    std::sort(perm.begin(), perm.end());
    do {
      std::size_t hits = 0;
      for (std::size_t i = 0; i < feats.size(); ++i)
        hits += perm[static_cast<std::size_t>(kept[i]->latent_cluster)] == assigned[i];
      best = std::max(best, hits);
    } while (std::next_permutation(perm.begin(), perm.end()));
    agree += best;
    total += feats.size();
  }
  REQUIRE(total > 200);
  CHECK(static_cast<double>(agree) / static_cast<double>(total) >= 0.99);
}

TEST_CASE("build_example walks the documented pipeline on a hand-built log") {
  // 8 suggestions in 4 well-separated 1-d clusters with click rates
  // {.9,.8}, {.7,.1}, {.6,.5}, {.4,.3}.
  GmmModel gmm;
  gmm.k = 4;
  gmm.requested_k = 4;
  gmm.dim = 1;
  gmm.means = {{0.0}, {10.0}, {20.0}, {30.0}};
  gmm.variances = {{1.0}, {1.0}, {1.0}, {1.0}};
  gmm.mixture_weights = {0.25, 0.25, 0.25, 0.25};

  RawQueryLog log;
  log.query_id = 99;
  log.query_features = {0.0};
  log.impressions = 100;
  const double rates[8] = {0.9, 0.8, 0.7, 0.1, 0.6, 0.5, 0.4, 0.3};
  const double positions[8] = {0.0, 0.2, 10.0, 10.2, 20.0, 20.2, 30.0, 30.2};
  for (int i = 0; i < 8; ++i) {
    RawSuggestion s;
    s.suggestion_id = i + 1;
    s.features = {positions[i]};
    s.click_rate = rates[i];
    s.cooccurrence_count = 10;
    log.suggestions.push_back(s);
  }
  GeneratorConfig cfg = small_config();
  cfg.min_cooccurrence = 5;
  cfg.min_impressions = 50;

  const BuildOutcome outcome = build_example(log, gmm, cfg);
  REQUIRE(outcome.example.has_value());
  const QueryExample& ex = *outcome.example;
  // Cluster bests are .9, .7, .6, .4 -> ids 1, 3, 5, 7.
  CHECK(ex.labels == std::array<std::int64_t, 4>{1, 3, 5, 7});
  // Ranks within each cluster.
  for (const auto& rec : ex.candidates) {
    const bool best = rec.suggestion_id % 2 == 1;
    CHECK(rec.rank_in_cluster == (best ? 1 : 2));
  }
}

TEST_CASE("build_example rejections carry reasons") {
  GmmModel gmm;
  gmm.k = 1;
  gmm.requested_k = 1;
  gmm.dim = 1;
  gmm.means = {{0.0}};
  gmm.variances = {{1.0}};
  gmm.mixture_weights = {1.0};

  GeneratorConfig cfg = small_config();
  RawQueryLog log;
  log.query_id = 1;
  log.query_features = {0.0};
  log.impressions = 100;
  for (int i = 0; i < 6; ++i) {
    RawSuggestion s;
    s.suggestion_id = i;
    s.features = {static_cast<double>(i)};
    s.click_rate = 0.5;
    s.cooccurrence_count = 10;
    log.suggestions.push_back(s);
  }
  // Everything lands in one cluster.
  CHECK(build_example(log, gmm, cfg).reject_reason == "clusters");

  RawQueryLog low = log;
  low.impressions = cfg.min_impressions - 1;
  CHECK(build_example(low, gmm, cfg).reject_reason == "impressions");

  RawQueryLog starved = log;
  for (auto& s : starved.suggestions) s.cooccurrence_count = 0;
  CHECK(build_example(starved, gmm, cfg).reject_reason == "candidates");
}

TEST_CASE("every built example satisfies its invariants") {
  const auto corpus = build_corpus(small_config());
  REQUIRE(!corpus.empty());
  for (const auto& ex : corpus) {
    CHECK_NOTHROW(validate_example(ex));
    CHECK(ex.candidates.size() >= 4);
    std::set<int> label_clusters;
    for (auto id : ex.labels) {
      const auto it = std::find_if(ex.candidates.begin(), ex.candidates.end(),
                                   [&](const SuggestionRecord& r) { return r.suggestion_id == id; });
      REQUIRE(it != ex.candidates.end());
      label_clusters.insert(it->cluster_id);
    }
    CHECK(label_clusters.size() == 4);
  }
}

TEST_CASE("dataset write/read round trip") {
  const auto corpus = build_corpus(small_config());
  const std::string path = "dataset_roundtrip.jsonl";
  write_dataset(path, corpus);
  const auto loaded = read_dataset(path);
  CHECK(dataset_to_string(loaded) == dataset_to_string(corpus));

  // Malformed record reports the line number.
  std::FILE* f = std::fopen("dataset_bad.jsonl", "w");
  std::fputs("{\"query_id\": 1}\n", f);
  std::fclose(f);
  CHECK_THROWS_WITH_AS(read_dataset("dataset_bad.jsonl"), doctest::Contains("line 1"), parse_error);
}

TEST_CASE("split proportions and determinism") {
  std::vector<QueryExample> corpus(122);
  for (std::size_t i = 0; i < corpus.size(); ++i) corpus[i].query_id = static_cast<std::int64_t>(i * 3 + 1);
  const SplitIndices split = split_corpus(corpus, 42);
  CHECK(split.train.size() == 100);
  CHECK(split.validation.size() == 11);
  CHECK(split.test.size() == 11);

  const SplitIndices again = split_corpus(corpus, 42);
  CHECK(split.train == again.train);
  CHECK(split.validation == again.validation);
  CHECK(split.test == again.test);

  const SplitIndices other = split_corpus(corpus, 43);
  CHECK(other.train.size() == 100);
  CHECK(split.train != other.train);  // different seed shuffles membership

  // Ragged corpus size stays within one query of the exact shares.
  corpus.resize(123);
  corpus[122].query_id = 999;
  const SplitIndices ragged = split_corpus(corpus, 1);
  CHECK(std::abs(static_cast<double>(ragged.train.size()) - 123.0 * 100 / 122) <= 1.0);
  CHECK(std::abs(static_cast<double>(ragged.validation.size()) - 123.0 * 11 / 122) <= 1.0);
  CHECK(std::abs(static_cast<double>(ragged.test.size()) - 123.0 * 11 / 122) <= 1.0);
}
