#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>

#include "doctest.h"

#include "blockrec/errors.hpp"
#include "blockrec/trainer.hpp"

using namespace blockrec;

namespace {

GeneratorConfig smoke_generator(std::size_t queries) {
  GeneratorConfig gen;
  gen.num_queries = queries;
  gen.mean_candidates_per_query = 8.0;
  gen.d_raw = 8;
  gen.k = 4;
  gen.cluster_separation = 8.0;
  gen.click_noise = 0.005;
  gen.seed = 101;
  return gen;
}

RunConfig smoke_config() {
  RunConfig cfg;
  cfg.encoder = EncoderConfig{8, 16, 8};
  cfg.decoder.lstm_hidden_dim = 8;
  cfg.decoder.hmn_hidden_dim = 8;
  cfg.decoder.maxout_pool = 2;
  cfg.epochs = 2;
  cfg.seed = 7;
  cfg.adam.lr = 5e-3;
  cfg.adam.weight_decay = 5.0;
  cfg.grad_clip_norm = 2.0;
  return cfg;
}

}  // namespace

TEST_CASE("two smoke epochs cut the training cross entropy by at least 20 percent") {
  GeneratorConfig gen = smoke_generator(62);  // ~50 survive thresholds and land in train
  const auto corpus = build_corpus(gen);
  REQUIRE(corpus.size() >= 50);

  const RunConfig cfg = smoke_config();
  const TrainResult result = train(cfg, corpus);
  CHECK(result.final_train_ce < 0.8 * result.initial_train_ce);
  CHECK(result.log_lines.size() == cfg.epochs);
}

TEST_CASE("training is bit-identical for identical config and seed") {
  const auto corpus = build_corpus(smoke_generator(40));
  RunConfig cfg = smoke_config();
  cfg.objectives = {"ce", "f1", "div", "mrr"};  // exercise the sampled path too
  cfg.epochs = 1;

  auto run = [&] {
    const TrainResult r = train(cfg, corpus);
    const SplitIndices split = split_corpus(corpus, cfg.seed);
    ParamStore params = r.params;
    const MetricsReport test =
        evaluate_pointer_model(corpus, split.test, params, cfg.encoder, cfg.decoder);
    return std::tuple{r.initial_train_ce, r.final_train_ce, test.div_score, test.recall,
                      test.p_at_1, test.em};
  };
  CHECK(run() == run());
}

TEST_CASE("loss weight count follows the objective set") {
  RunConfig cfg = smoke_config();
  cfg.objectives = {"ce"};
  CHECK(build_pointer_model(cfg).has("loss.s_ce"));
  CHECK(!build_pointer_model(cfg).has("loss.s_f1"));

  cfg.objectives = {"ce", "f1", "div", "mrr"};
  ParamStore store = build_pointer_model(cfg);
  std::size_t weights = 0;
  for (const auto& [name, p] : store.entries()) weights += name.rfind("loss.", 0) == 0;
  CHECK(weights == 4);

  // Identical initial weights regardless of the objective set.
  RunConfig ce_only = smoke_config();
  ce_only.objectives = {"ce"};
  ParamStore a = build_pointer_model(ce_only);
  CHECK(a.at("decoder.hmn0.w1").value.values == store.at("decoder.hmn0.w1").value.values);
}

TEST_CASE("a non-finite input aborts training with the offending query id") {
  auto corpus = build_corpus(smoke_generator(40));
  REQUIRE(corpus.size() >= 10);
  corpus[3].candidates[0].features[0] = HUGE_VAL;
  RunConfig cfg = smoke_config();
  cfg.epochs = 1;
  CHECK_THROWS_WITH_AS(train(cfg, corpus), doctest::Contains("query_id"), contract_error);
}

TEST_CASE("matrix with only the mmr rows shares one classifier") {
  const auto corpus = build_corpus(smoke_generator(60));
  RunConfig cfg = smoke_config();
  const std::vector<MatrixRowSpec> rows = {
      {"mmr(γ = 0.6)", true, 0.6, {}},
      {"mmr(γ = 1.0)", true, 1.0, {}},
  };
  const MatrixResult result = run_matrix(cfg, corpus, rows);
  REQUIRE(result.rows.size() == 2);
  CHECK(!result.rows[0].failed);
  CHECK(!result.rows[1].failed);
  // The first pick is the pure relevance argmax for any gamma, so a shared
  // classifier forces identical P@1.
  CHECK(result.rows[0].test.p_at_1 == result.rows[1].test.p_at_1);
}

TEST_CASE("default matrix rows carry the exact report names") {
  const auto rows = default_matrix_rows();
  REQUIRE(rows.size() == 7);
  CHECK(rows[0].name == "ce");
  CHECK(rows[1].name == "ce+f1");
  CHECK(rows[2].name == "ce+f1+mrr");
  CHECK(rows[3].name == "ce+f1+div");
  CHECK(rows[4].name == "ce+f1+mrr+div");
  CHECK(rows[5].name == "mmr(γ = 0.6)");
  CHECK(rows[6].name == "mmr(γ = 1.0)");
}

TEST_CASE("full matrix on a tiny corpus emits all 28 cells") {
  const auto corpus = build_corpus(smoke_generator(60));
  RunConfig cfg = smoke_config();
  cfg.epochs = 1;
  const MultiSeedMatrixResult result = run_matrix_seeds(cfg, corpus, default_matrix_rows(), {5});
  REQUIRE(result.median_rows.size() == 7);
  for (const auto& row : result.median_rows) {
    CHECK(!row.failed);
    CHECK(row.test.div_score >= 0.0);
    CHECK(row.test.recall >= 0.0);
    CHECK(row.test.p_at_1 >= 0.0);
    CHECK(row.test.em >= 0.0);
  }
  const std::string table = matrix_table(result);
  CHECK(table.find("ce+f1+mrr+div") != std::string::npos);
  const std::string json_text = matrix_to_string(result);
  CHECK(json_text.find("median") != std::string::npos);
}

TEST_CASE("a failing row annotates the report instead of aborting the matrix") {
  const auto corpus = build_corpus(smoke_generator(60));
  RunConfig cfg = smoke_config();
  cfg.epochs = 1;
  std::vector<MatrixRowSpec> rows = {
      {"ce", false, 0.0, {"ce"}},
      {"broken", false, 0.0, {"ce", "unknown-objective"}},
  };
  const MatrixResult result = run_matrix(cfg, corpus, rows);
  CHECK(!result.rows[0].failed);
  CHECK(result.rows[1].failed);
  CHECK(!result.rows[1].error.empty());
}

TEST_CASE("run config round-trips through json and hashes stably") {
  RunConfig cfg = smoke_config();
  cfg.objectives = {"ce", "div"};
  cfg.data_path = "some/data.jsonl";
  const std::string text = config_to_json_string(cfg);
  const RunConfig parsed = config_from_json_string(text);
  CHECK(parsed.objectives == cfg.objectives);
  CHECK(parsed.encoder.d_e == cfg.encoder.d_e);
  CHECK(parsed.decoder.hmn_hidden_dim == cfg.decoder.hmn_hidden_dim);
  CHECK(config_hash(parsed) == config_hash(cfg));

  RunConfig other = cfg;
  other.seed = cfg.seed + 1;
  CHECK(config_hash(other) != config_hash(cfg));

  CHECK_THROWS_AS(config_from_json_string("{not json"), parse_error);
  CHECK_THROWS_AS(config_from_json_string("{\"objectives\":[\"f1\"]}"), contract_error);
}
