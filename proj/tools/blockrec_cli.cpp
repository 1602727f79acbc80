// Command-line front end: dataset generation, training, evaluation, the
// MMR baseline, the experiment matrix, and the gradient-check suite.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "blockrec/dataset.hpp"
#include "blockrec/gradcheck.hpp"
#include "blockrec/trainer.hpp"

using namespace blockrec;

namespace {

std::string default_data_path(const std::string& cli_value, const std::string& config_value) {
  if (!cli_value.empty()) return cli_value;
  if (!config_value.empty()) return config_value;
  if (const char* dir = std::getenv("BLOCKREC_DATA_DIR"))
    return (std::filesystem::path(dir) / "dataset.jsonl").string();
  return "dataset.jsonl";
}

std::vector<std::size_t> indices_for_split(const std::vector<QueryExample>& corpus,
                                           const std::string& split_name, std::uint64_t seed) {
  if (split_name == "all") {
    std::vector<std::size_t> all(corpus.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }
  const SplitIndices split = split_corpus(corpus, seed);
  if (split_name == "train") return split.train;
  if (split_name == "validation") return split.validation;
  if (split_name == "test") return split.test;
  throw contract_error("unknown split: " + split_name);
}

int cmd_gen_data(const std::string& config_path, const std::string& out_path, std::int64_t seed) {
  RunConfig cfg = config_path.empty() ? RunConfig{} : read_run_config(config_path);
  if (seed >= 0) cfg.generator.seed = static_cast<std::uint64_t>(seed);
  const auto corpus = build_corpus(cfg.generator);
  write_dataset(out_path, corpus);
  std::printf("wrote %zu queries to %s (requested %zu, rejected %zu)\n", corpus.size(),
              out_path.c_str(), cfg.generator.num_queries, cfg.generator.num_queries - corpus.size());
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data, const std::string& checkpoint) {
  RunConfig cfg = read_run_config(config_path);
  if (!checkpoint.empty()) cfg.checkpoint_path = checkpoint;
  if (cfg.checkpoint_path.empty()) cfg.checkpoint_path = "checkpoint.bin";
  if (cfg.train_log_path.empty()) cfg.train_log_path = cfg.checkpoint_path + ".log";
  const auto corpus = read_dataset(default_data_path(data, cfg.data_path));
  const TrainResult result = train(cfg, corpus);
  std::printf("train ce %.4f -> %.4f  best epoch %zu  val recall %.4f  checkpoint %s\n",
              result.initial_train_ce, result.final_train_ce, result.best_epoch,
              result.best_validation.recall, cfg.checkpoint_path.c_str());
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data, const std::string& report,
             const std::string& split_name, const std::string& dump_trace) {
  const Checkpoint ckpt = read_checkpoint(checkpoint);
  RunConfig cfg = config_from_json_string(ckpt.config_json);
  ParamStore store = build_pointer_model(cfg);
  load_into(store, ckpt);
  const auto corpus = read_dataset(default_data_path(data, cfg.data_path));
  const auto indices = indices_for_split(corpus, split_name, cfg.seed);
  MetricsReport rep =
      evaluate_pointer_model(corpus, indices, store, cfg.encoder, cfg.decoder, dump_trace);
  rep.objectives = objectives_to_string(parse_objectives(cfg.objectives));
  rep.seed = cfg.seed;
  rep.config_hash = config_hash(cfg);
  write_report(report, rep);
  std::printf("%s split=%s queries=%zu div %.5f recall %.5f p@1 %.5f em %.5f\n", report.c_str(),
              split_name.c_str(), rep.per_query.size(), rep.div_score, rep.recall, rep.p_at_1,
              rep.em);
  return 0;
}

int cmd_mmr(double gamma, const std::string& checkpoint, const std::string& data,
            const std::string& report, bool do_train, const std::string& config_path) {
  RunConfig cfg = config_path.empty() ? RunConfig{} : read_run_config(config_path);
  const auto corpus = read_dataset(default_data_path(data, cfg.data_path));
  const SplitIndices split = split_corpus(corpus, cfg.seed);

  ParamStore store;
  if (do_train) {
    Rng rng(cfg.seed);
    register_classifier_params(store, cfg.encoder, rng);
    ClassifierTrainConfig cls = cfg.classifier;
    cls.seed = cfg.seed;
    const ClassifierTrainStats stats = train_classifier(corpus, split.train, store, cfg.encoder, cls);
    save_checkpoint(checkpoint, store, config_to_json_string(cfg));
    std::printf("classifier pair loss %.4f -> %.4f (train accuracy %.4f), checkpoint %s\n",
                stats.initial_loss, stats.final_loss, stats.train_accuracy, checkpoint.c_str());
  } else {
    const Checkpoint ckpt = read_checkpoint(checkpoint);
    cfg = config_from_json_string(ckpt.config_json);
    Rng rng(cfg.seed);
    register_classifier_params(store, cfg.encoder, rng);
    load_into(store, ckpt);
  }

  MmrConfig mmr;
  mmr.gamma = gamma;
  MetricsReport rep = evaluate_mmr(corpus, split.test, store, mmr);
  rep.objectives = "mmr(gamma=" + std::to_string(gamma) + ")";
  rep.seed = cfg.seed;
  rep.config_hash = config_hash(cfg);
  write_report(report, rep);
  std::printf("%s gamma=%.2f div %.5f recall %.5f p@1 %.5f em %.5f\n", report.c_str(), gamma,
              rep.div_score, rep.recall, rep.p_at_1, rep.em);
  return 0;
}

int cmd_run_matrix(const std::string& config_path, const std::string& data, const std::string& out_dir,
                   const std::vector<std::uint64_t>& seeds) {
  RunConfig cfg = config_path.empty() ? RunConfig{} : read_run_config(config_path);
  const auto corpus = read_dataset(default_data_path(data, cfg.data_path));
  const std::vector<std::uint64_t> use_seeds = seeds.empty() ? std::vector<std::uint64_t>{cfg.seed} : seeds;
  const MultiSeedMatrixResult result = run_matrix_seeds(cfg, corpus, default_matrix_rows(), use_seeds);

  std::filesystem::create_directories(out_dir);
  const auto report_path = (std::filesystem::path(out_dir) / "matrix.json").string();
  std::FILE* f = std::fopen(report_path.c_str(), "w");
  if (!f) throw parse_error("cannot open " + report_path);
  const std::string text = matrix_to_string(result);
  std::fwrite(text.data(), 1, text.size(), f);
  std::fclose(f);

  std::printf("%s", matrix_table(result).c_str());
  std::printf("matrix report: %s\n", report_path.c_str());
  for (const auto& row : result.median_rows)
    if (row.failed) return 1;
  return 0;
}

int cmd_gradcheck() {
  const auto results = run_gradient_checks();
  for (const auto& r : results)
    std::printf("[%s] %-34s max rel err %.3e (tolerance %.0e)\n", r.pass ? "PASS" : "FAIL",
                r.name.c_str(), r.max_rel_err, r.tolerance);
  return all_pass(results) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Block-level search suggestion ranking: four-pointer decoder, rewards, MMR baseline"};
  app.require_subcommand(1);

  std::string config_path, out_path, data_path, checkpoint_path, report_path;
  std::string split_name = "test", dump_trace;
  std::int64_t seed_override = -1;
  double gamma = 0.6;
  bool mmr_train = false;
  std::vector<std::uint64_t> seeds;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic corpus");
  gen->add_option("--config", config_path, "Run config JSON (generator section)");
  gen->add_option("--out", out_path, "Output dataset path")->required();
  gen->add_option("--seed", seed_override, "Generator seed override");

  auto* train_cmd = app.add_subcommand("train", "Train the pointer model");
  train_cmd->add_option("--config", config_path, "Run config JSON")->required();
  train_cmd->add_option("--data", data_path, "Dataset path (default: config, then $BLOCKREC_DATA_DIR)");
  train_cmd->add_option("--checkpoint", checkpoint_path, "Checkpoint output path");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a pointer checkpoint");
  eval_cmd->add_option("--checkpoint", checkpoint_path, "Checkpoint path")->required();
  eval_cmd->add_option("--data", data_path, "Dataset path");
  eval_cmd->add_option("--report", report_path, "Report output path")->required();
  eval_cmd->add_option("--split", split_name, "train|validation|test|all (default test)");
  eval_cmd->add_option("--dump-trace", dump_trace, "Write per-query decode traces (JSON lines)");

  auto* mmr_cmd = app.add_subcommand("mmr-baseline", "MMR reranking over classifier scores");
  mmr_cmd->add_option("--gamma", gamma, "Relevance/diversity trade-off")->required();
  mmr_cmd->add_option("--checkpoint", checkpoint_path, "Classifier checkpoint")->required();
  mmr_cmd->add_option("--data", data_path, "Dataset path");
  mmr_cmd->add_option("--report", report_path, "Report output path")->required();
  mmr_cmd->add_flag("--train", mmr_train, "Train the classifier and write the checkpoint first");
  mmr_cmd->add_option("--config", config_path, "Run config JSON (required with --train)");

  auto* matrix_cmd = app.add_subcommand("run-matrix", "Run the full objective/baseline matrix");
  matrix_cmd->add_option("--config", config_path, "Run config JSON");
  matrix_cmd->add_option("--data", data_path, "Dataset path");
  matrix_cmd->add_option("--out", out_path, "Output directory")->required();
  matrix_cmd->add_option("--seeds", seeds, "Training seeds (median reported)");

  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  (void)gradcheck_cmd;

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(config_path, out_path, seed_override);
    if (train_cmd->parsed()) return cmd_train(config_path, data_path, checkpoint_path);
    if (eval_cmd->parsed())
      return cmd_eval(checkpoint_path, data_path, report_path, split_name, dump_trace);
    if (mmr_cmd->parsed())
      return cmd_mmr(gamma, checkpoint_path, data_path, report_path, mmr_train, config_path);
    if (matrix_cmd->parsed()) return cmd_run_matrix(config_path, data_path, out_path, seeds);
    if (gradcheck_cmd->parsed()) return cmd_gradcheck();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
