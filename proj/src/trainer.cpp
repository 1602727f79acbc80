#include "blockrec/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "blockrec/errors.hpp"

namespace blockrec {

using nlohmann::json;

namespace {

json generator_to_json(const GeneratorConfig& g) {
  return json{{"num_queries", g.num_queries},
              {"mean_candidates_per_query", g.mean_candidates_per_query},
              {"d_raw", g.d_raw},
              {"k", g.k},
              {"min_cooccurrence", g.min_cooccurrence},
              {"min_impressions", g.min_impressions},
              {"click_noise", g.click_noise},
              {"cluster_separation", g.cluster_separation},
              {"fail_fraction_cooccurrence", g.fail_fraction_cooccurrence},
              {"fail_fraction_impressions", g.fail_fraction_impressions},
              {"seed", g.seed},
              {"gmm_max_iter", g.gmm_max_iter},
              {"gmm_tol", g.gmm_tol}};
}

void generator_from_json(const json& j, GeneratorConfig& g) {
  g.num_queries = j.value("num_queries", g.num_queries);
  g.mean_candidates_per_query = j.value("mean_candidates_per_query", g.mean_candidates_per_query);
  g.d_raw = j.value("d_raw", g.d_raw);
  g.k = j.value("k", g.k);
  g.min_cooccurrence = j.value("min_cooccurrence", g.min_cooccurrence);
  g.min_impressions = j.value("min_impressions", g.min_impressions);
  g.click_noise = j.value("click_noise", g.click_noise);
  g.cluster_separation = j.value("cluster_separation", g.cluster_separation);
  g.fail_fraction_cooccurrence = j.value("fail_fraction_cooccurrence", g.fail_fraction_cooccurrence);
  g.fail_fraction_impressions = j.value("fail_fraction_impressions", g.fail_fraction_impressions);
  g.seed = j.value("seed", g.seed);
  g.gmm_max_iter = j.value("gmm_max_iter", g.gmm_max_iter);
  g.gmm_tol = j.value("gmm_tol", g.gmm_tol);
}

}  // namespace

std::string config_to_json_string(const RunConfig& c) {
  const json j{
      {"data", c.data_path},
      {"checkpoint", c.checkpoint_path},
      {"report", c.report_path},
      {"train_log", c.train_log_path},
      {"objectives", c.objectives},
      {"epochs", c.epochs},
      {"seed", c.seed},
      {"grad_clip_norm", c.grad_clip_norm},
      {"encoder", {{"d_raw", c.encoder.d_raw}, {"d_a", c.encoder.d_a}, {"d_e", c.encoder.d_e}}},
      {"decoder",
       {{"max_iterations", c.decoder.max_iterations},
        {"lstm_hidden_dim", c.decoder.lstm_hidden_dim},
        {"hmn_hidden_dim", c.decoder.hmn_hidden_dim},
        {"maxout_pool", c.decoder.maxout_pool},
        {"mask_within_iteration", c.decoder.mask_within_iteration},
        {"sample_temperature", c.decoder.sample_temperature}}},
      {"optimizer",
       {{"lr", c.adam.lr}, {"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}, {"weight_decay", c.adam.weight_decay}}},
      {"classifier",
       {{"epochs", c.classifier.epochs}, {"lr", c.classifier.lr}, {"seed", c.classifier.seed}}},
      {"generator", generator_to_json(c.generator)},
  };
  return j.dump();
}

RunConfig config_from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw parse_error(std::string("config: ") + e.what());
  }
  RunConfig c;
  c.data_path = j.value("data", c.data_path);
  c.checkpoint_path = j.value("checkpoint", c.checkpoint_path);
  c.report_path = j.value("report", c.report_path);
  c.train_log_path = j.value("train_log", c.train_log_path);
  c.objectives = j.value("objectives", c.objectives);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.grad_clip_norm = j.value("grad_clip_norm", c.grad_clip_norm);
  if (j.contains("encoder")) {
    const auto& e = j.at("encoder");
    c.encoder.d_raw = e.value("d_raw", c.encoder.d_raw);
    c.encoder.d_a = e.value("d_a", c.encoder.d_a);
    c.encoder.d_e = e.value("d_e", c.encoder.d_e);
  }
  if (j.contains("decoder")) {
    const auto& d = j.at("decoder");
    c.decoder.max_iterations = d.value("max_iterations", c.decoder.max_iterations);
    c.decoder.lstm_hidden_dim = d.value("lstm_hidden_dim", c.decoder.lstm_hidden_dim);
    c.decoder.hmn_hidden_dim = d.value("hmn_hidden_dim", c.decoder.hmn_hidden_dim);
    c.decoder.maxout_pool = d.value("maxout_pool", c.decoder.maxout_pool);
    c.decoder.mask_within_iteration = d.value("mask_within_iteration", c.decoder.mask_within_iteration);
    c.decoder.sample_temperature = d.value("sample_temperature", c.decoder.sample_temperature);
  }
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    c.adam.lr = o.value("lr", c.adam.lr);
    c.adam.beta1 = o.value("beta1", c.adam.beta1);
    c.adam.beta2 = o.value("beta2", c.adam.beta2);
    c.adam.eps = o.value("eps", c.adam.eps);
    c.adam.weight_decay = o.value("weight_decay", c.adam.weight_decay);
  }
  if (j.contains("classifier")) {
    const auto& cl = j.at("classifier");
    c.classifier.epochs = cl.value("epochs", c.classifier.epochs);
    c.classifier.lr = cl.value("lr", c.classifier.lr);
    c.classifier.seed = cl.value("seed", c.classifier.seed);
  }
  if (j.contains("generator")) generator_from_json(j.at("generator"), c.generator);
  parse_objectives(c.objectives);  // reject unknown names early
  return c;
}

RunConfig read_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open config: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return config_from_json_string(buffer.str());
}

std::string config_hash(const RunConfig& config) {
  const std::string canon = config_to_json_string(config);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(canon.data(), canon.size())));
  return buf;
}

namespace {

std::vector<std::string> active_weight_names(const ObjectiveSet& set) {
  std::vector<std::string> names = {"loss.s_ce"};
  if (set.overlap) names.push_back("loss.s_f1");
  if (set.diversity) names.push_back("loss.s_div");
  if (set.mrr) names.push_back("loss.s_mrr");
  return names;
}

}  // namespace

ParamStore build_pointer_model(const RunConfig& config) {
  ParamStore store;
  Rng init_rng(config.seed);
  register_encoder_params(store, config.encoder, init_rng);
  register_decoder_params(store, config.decoder, config.encoder.d_e, init_rng);
  for (const auto& name : active_weight_names(parse_objectives(config.objectives)))
    store.create(name, Tensor::zeros({1}));  // s = log w^2 starts at 0 (w = 1)
  return store;
}

namespace {

void clip_gradients(ParamStore& store, double max_norm) {
  double norm_sq = 0.0;
  for (const auto& [name, p] : store.entries())
    for (double g : p.grad) norm_sq += g * g;
  if (norm_sq <= max_norm * max_norm) return;
  const double factor = max_norm / std::sqrt(norm_sq);
  for (auto& [name, p] : store.entries())
    for (double& g : p.grad) g *= factor;
}

double mean_train_ce(const std::vector<QueryExample>& corpus,
                     const std::vector<std::size_t>& indices, ParamStore& store,
                     const RunConfig& config, const std::vector<Labels>& labels) {
  std::vector<double> per_query(indices.size(), 0.0);
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(indices.size()); ++i) {
    const std::size_t idx = indices[static_cast<std::size_t>(i)];
    Tape tape;
    const EncoderVars enc = encoder_vars(tape, store);
    const DecoderVars dec = decoder_vars(tape, store);
    const auto embeddings = encode_all(tape, enc, corpus[idx]);
    const DecodeTrace trace = decode(tape, dec, embeddings, config.decoder);
    per_query[static_cast<std::size_t>(i)] = tape.value(ce_loss(tape, trace, labels[idx])).values[0];
  }
  double total = 0.0;
  for (double v : per_query) total += v;
  return indices.empty() ? 0.0 : total / static_cast<double>(indices.size());
}

}  // namespace

TrainResult train(const RunConfig& config, const std::vector<QueryExample>& corpus) {
  const ObjectiveSet objectives = parse_objectives(config.objectives);
  const SplitIndices split = split_corpus(corpus, config.seed);
  if (split.train.empty()) throw contract_error("train: empty training split");

  std::vector<Labels> labels(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) labels[i] = labels_from_example(corpus[i]);

  ParamStore store = build_pointer_model(config);
  const auto weight_names = active_weight_names(objectives);

  TrainResult result;
  result.initial_train_ce = mean_train_ce(corpus, split.train, store, config, labels);

  AdamState adam_state;
  Rng shuffle_rng(splitmix64stream(config.seed, 0x7261696e));
  Rng sample_rng(splitmix64stream(config.seed, 0x73616d70));
  std::vector<std::size_t> order = split.train;

  double best_recall = -1.0;
  ParamStore best_params = store;
  double last_finite_ce = 0.0, last_finite_total = 0.0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_ce = 0.0, epoch_total = 0.0;
    for (std::size_t idx : order) {
      const QueryExample& ex = corpus[idx];
      store.zero_grads();
      Tape tape;
      const EncoderVars enc = encoder_vars(tape, store);
      const DecoderVars dec = decoder_vars(tape, store);
      const auto embeddings = encode_all(tape, enc, ex);
      const DecodeTrace trace =
          decode(tape, dec, embeddings, config.decoder, objectives.any_rl() ? &sample_rng : nullptr);

      std::vector<Var> losses = {ce_loss(tape, trace, labels[idx])};
      if (objectives.any_rl()) {
        const RewardBundle rewards = compute_rewards(trace, ex, labels[idx]);
        if (objectives.overlap)
          losses.push_back(rl_loss(tape, trace, rewards, RewardKind::overlap,
                                   config.decoder.sample_temperature));
        if (objectives.diversity)
          losses.push_back(rl_loss(tape, trace, rewards, RewardKind::diversity,
                                   config.decoder.sample_temperature));
        if (objectives.mrr)
          losses.push_back(rl_loss(tape, trace, rewards, RewardKind::mrr,
                                   config.decoder.sample_temperature));
      }
      std::vector<Var> weights;
      for (const auto& name : weight_names) weights.push_back(tape.param(store.at(name)));
      const Var total = combine_losses(tape, losses, weights);

      const double ce_value = tape.value(losses[0]).values[0];
      const double total_value = tape.value(total).values[0];
      if (!std::isfinite(total_value) || !std::isfinite(ce_value))
        throw contract_error("non-finite loss at query_id " + std::to_string(ex.query_id) +
                             " (last finite ce " + std::to_string(last_finite_ce) +
                             ", combined " + std::to_string(last_finite_total) + ")");
      last_finite_ce = ce_value;
      last_finite_total = total_value;
      epoch_ce += ce_value;
      epoch_total += total_value;

      tape.backward(total);
      if (config.grad_clip_norm > 0.0) clip_gradients(store, config.grad_clip_norm);
      adam_step(store, config.adam, adam_state);
    }

    MetricsReport val = evaluate_pointer_model(corpus, split.validation, store, config.encoder,
                                               config.decoder);
    std::ostringstream line;
    line << "epoch " << epoch + 1 << " mean_ce " << epoch_ce / static_cast<double>(order.size())
         << " mean_combined " << epoch_total / static_cast<double>(order.size()) << " val_recall "
         << val.recall << " val_div " << val.div_score << " val_p1 " << val.p_at_1 << " val_em "
         << val.em;
    result.log_lines.push_back(line.str());

    if (val.recall > best_recall) {
      best_recall = val.recall;
      best_params = store;
      result.best_validation = val;
      result.best_epoch = epoch + 1;
    }
  }

  result.final_train_ce = mean_train_ce(corpus, split.train, store, config, labels);
  result.params = std::move(best_params);

  if (!config.checkpoint_path.empty())
    save_checkpoint(config.checkpoint_path, result.params, config_to_json_string(config));
  if (!config.train_log_path.empty()) {
    std::ofstream log(config.train_log_path, std::ios::trunc);
    for (const auto& line : result.log_lines) log << line << '\n';
  }
  return result;
}

MetricsReport evaluate_pointer_model(const std::vector<QueryExample>& corpus,
                                     const std::vector<std::size_t>& indices, ParamStore& store,
                                     const EncoderConfig& enc_config,
                                     const DecoderConfig& dec_config,
                                     const std::string& dump_trace_path) {
  if (indices.empty()) throw contract_error("evaluate over an empty index set");
  std::vector<std::pair<std::int64_t, QueryMetrics>> records(indices.size());
  std::vector<std::string> traces(dump_trace_path.empty() ? 0 : indices.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(indices.size()); ++i) {
    const QueryExample& ex = corpus[indices[static_cast<std::size_t>(i)]];
    Tape tape;
    const EncoderVars enc = encoder_vars(tape, store);
    const DecoderVars dec = decoder_vars(tape, store);
    const DecodeTrace trace = decode(tape, dec, encode_all(tape, enc, ex), dec_config);
    const PredictionRecord pred = prediction_from_pointers(ex, trace.final_pointers);
    records[static_cast<std::size_t>(i)] = {ex.query_id,
                                            query_metrics(pred, labels_from_example(ex))};
    if (!dump_trace_path.empty())
      traces[static_cast<std::size_t>(i)] = trace_to_string(trace, ex.query_id);
  }
  if (!dump_trace_path.empty()) {
    std::ofstream out(dump_trace_path, std::ios::trunc);
    if (!out) throw parse_error("cannot open trace dump: " + dump_trace_path);
    for (const auto& t : traces) out << t << '\n';
  }
  (void)enc_config;
  return aggregate(records);
}

MetricsReport evaluate_mmr(const std::vector<QueryExample>& corpus,
                           const std::vector<std::size_t>& indices, ParamStore& store,
                           const MmrConfig& config) {
  if (indices.empty()) throw contract_error("evaluate over an empty index set");
  std::vector<std::pair<std::int64_t, QueryMetrics>> records(indices.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(indices.size()); ++i) {
    const QueryExample& ex = corpus[indices[static_cast<std::size_t>(i)]];
    const PredictionRecord pred = mmr_predict(ex, store, config);
    records[static_cast<std::size_t>(i)] = {ex.query_id,
                                            query_metrics(pred, labels_from_example(ex))};
  }
  return aggregate(records);
}

std::vector<MatrixRowSpec> default_matrix_rows() {
  return {
      {"ce", false, 0.0, {"ce"}},
      {"ce+f1", false, 0.0, {"ce", "f1"}},
      {"ce+f1+mrr", false, 0.0, {"ce", "f1", "mrr"}},
      {"ce+f1+div", false, 0.0, {"ce", "f1", "div"}},
      {"ce+f1+mrr+div", false, 0.0, {"ce", "f1", "mrr", "div"}},
      {"mmr(γ = 0.6)", true, 0.6, {}},
      {"mmr(γ = 1.0)", true, 1.0, {}},
  };
}

MatrixResult run_matrix(const RunConfig& base, const std::vector<QueryExample>& corpus,
                        const std::vector<MatrixRowSpec>& rows) {
  MatrixResult result;
  result.seed = base.seed;
  const SplitIndices split = split_corpus(corpus, base.seed);

  // MMR rows share one classifier.
  bool classifier_ready = false;
  ParamStore classifier_store;
  auto ensure_classifier = [&] {
    if (classifier_ready) return;
    Rng rng(base.seed);
    register_classifier_params(classifier_store, base.encoder, rng);
    ClassifierTrainConfig cfg = base.classifier;
    cfg.seed = base.seed;
    train_classifier(corpus, split.train, classifier_store, base.encoder, cfg);
    classifier_ready = true;
  };

  for (const auto& row : rows) {
    MatrixRowResult row_result;
    row_result.name = row.name;
    try {
      if (row.is_mmr) {
        ensure_classifier();
        MmrConfig mmr;
        mmr.gamma = row.gamma;
        row_result.test = evaluate_mmr(corpus, split.test, classifier_store, mmr);
      } else {
        RunConfig cfg = base;
        cfg.objectives = row.objectives;
        cfg.checkpoint_path.clear();
        cfg.train_log_path.clear();
        TrainResult trained = train(cfg, corpus);
        row_result.test = evaluate_pointer_model(corpus, split.test, trained.params, cfg.encoder,
                                                 cfg.decoder);
        row_result.test.objectives = objectives_to_string(parse_objectives(cfg.objectives));
      }
      row_result.test.seed = base.seed;
      row_result.test.config_hash = config_hash(base);
    } catch (const std::exception& e) {
      row_result.failed = true;
      row_result.error = e.what();
    }
    result.rows.push_back(std::move(row_result));
  }
  return result;
}

MultiSeedMatrixResult run_matrix_seeds(const RunConfig& base,
                                       const std::vector<QueryExample>& corpus,
                                       const std::vector<MatrixRowSpec>& rows,
                                       const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw contract_error("run_matrix_seeds needs at least one seed");
  MultiSeedMatrixResult result;
  for (std::uint64_t seed : seeds) {
    RunConfig cfg = base;
    cfg.seed = seed;
    result.per_seed.push_back(run_matrix(cfg, corpus, rows));
  }
  // Across-seed median per metric per row.
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  for (std::size_t r = 0; r < rows.size(); ++r) {
    MatrixRowResult med;
    med.name = rows[r].name;
    std::vector<double> div, recall, p1, em;
    for (const auto& per_seed : result.per_seed) {
      const auto& row = per_seed.rows[r];
      if (row.failed) {
        med.failed = true;
        med.error = row.error;
        continue;
      }
      div.push_back(row.test.div_score);
      recall.push_back(row.test.recall);
      p1.push_back(row.test.p_at_1);
      em.push_back(row.test.em);
    }
    if (!div.empty()) {
      med.test.div_score = median(div);
      med.test.recall = median(recall);
      med.test.p_at_1 = median(p1);
      med.test.em = median(em);
    }
    result.median_rows.push_back(std::move(med));
  }
  return result;
}

std::string matrix_to_string(const MultiSeedMatrixResult& result) {
  json rows = json::array();
  for (std::size_t r = 0; r < result.median_rows.size(); ++r) {
    const auto& med = result.median_rows[r];
    json per_seed = json::array();
    for (const auto& seed_result : result.per_seed) {
      const auto& row = seed_result.rows[r];
      if (row.failed) {
        per_seed.push_back({{"seed", seed_result.seed}, {"failed", true}, {"error", row.error}});
      } else {
        per_seed.push_back({{"seed", seed_result.seed},
                            {"div_score", row.test.div_score},
                            {"recall", row.test.recall},
                            {"p_at_1", row.test.p_at_1},
                            {"em", row.test.em}});
      }
    }
    json entry{{"name", med.name}, {"per_seed", std::move(per_seed)}};
    if (med.failed) {
      entry["failed"] = true;
      entry["error"] = med.error;
    } else {
      entry["median"] = {{"div_score", med.test.div_score},
                         {"recall", med.test.recall},
                         {"p_at_1", med.test.p_at_1},
                         {"em", med.test.em}};
    }
    rows.push_back(std::move(entry));
  }
  return json{{"rows", std::move(rows)}}.dump(2);
}

std::string matrix_table(const MultiSeedMatrixResult& result) {
  std::ostringstream out;
  out << "Objectives         Div Score   Recall      P@1         EM\n";
  for (const auto& row : result.median_rows) {
    char buf[160];
    if (row.failed) {
      std::snprintf(buf, sizeof buf, "%-18s FAILED: %s\n", row.name.c_str(), row.error.c_str());
    } else {
      std::snprintf(buf, sizeof buf, "%-18s %-11.5f %-11.5f %-11.5f %-11.5f\n", row.name.c_str(),
                    row.test.div_score, row.test.recall, row.test.p_at_1, row.test.em);
    }
    out << buf;
  }
  return out.str();
}

}  // namespace blockrec
