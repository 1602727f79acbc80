#include "blockrec/gradcheck.hpp"

#include <cmath>
#include <functional>

#include "blockrec/decoder.hpp"
#include "blockrec/encoder.hpp"
#include "blockrec/objectives.hpp"
#include "blockrec/param_store.hpp"
#include "blockrec/rng.hpp"
#include "blockrec/tape.hpp"

namespace blockrec {

namespace {

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1e-6, std::abs(a), std::abs(b)});
}

// Worst relative error between analytic gradients and central differences
// over every parameter element. `build` must reconstruct the loss from
// the current store contents.
double check(ParamStore& store, const std::function<Var(Tape&)>& build, double h = 1e-6) {
  store.zero_grads();
  {
    Tape tape;
    tape.backward(build(tape));
  }
  double worst = 0.0;
  for (auto& [name, p] : store.entries()) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double keep = p.value.values[i];
      p.value.values[i] = keep + h;
      double up;
      {
        Tape tape;
        up = tape.value(build(tape)).values[0];
      }
      p.value.values[i] = keep - h;
      double down;
      {
        Tape tape;
        down = tape.value(build(tape)).values[0];
      }
      p.value.values[i] = keep;
      worst = std::max(worst, rel_err((up - down) / (2.0 * h), p.grad[i]));
    }
  }
  return worst;
}

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.values) v = rng.uniform(lo, hi);
  return t;
}

GradCheckResult run_one(const std::string& name, double tolerance, ParamStore& store,
                        const std::function<Var(Tape&)>& build) {
  GradCheckResult result;
  result.name = name;
  result.tolerance = tolerance;
  result.max_rel_err = check(store, build);
  result.pass = result.max_rel_err <= tolerance;
  return result;
}

GradCheckResult full_model_pass() {
  // Small dims keep the finite-difference sweep under the time budget
  // while exercising every module.
  const EncoderConfig enc_cfg{4, 6, 4};
  DecoderConfig dec_cfg;
  dec_cfg.lstm_hidden_dim = 5;
  dec_cfg.hmn_hidden_dim = 3;
  dec_cfg.maxout_pool = 2;

  Rng rng(2024);
  ParamStore store;
  register_encoder_params(store, enc_cfg, rng);
  register_decoder_params(store, dec_cfg, enc_cfg.d_e, rng);
  for (const char* s : {"loss.s_ce", "loss.s_f1", "loss.s_div", "loss.s_mrr"})
    store.create(s, Tensor::scalar(0.1));

  QueryExample ex;
  ex.query_id = 1;
  ex.query_features = rng.normal_vector(enc_cfg.d_raw);
  ex.impressions = 100;
  const std::size_t n = 6;
  for (std::size_t i = 0; i < n; ++i) {
    SuggestionRecord rec;
    rec.suggestion_id = static_cast<std::int64_t>(i);
    rec.features = rng.normal_vector(enc_cfg.d_raw);
    rec.click_rate = 1.0 - 0.1 * static_cast<double>(i);
    rec.cooccurrence_count = 10;
    rec.cluster_id = static_cast<int>(i % 4);
    rec.rank_in_cluster = static_cast<int>(i / 4 + 1);
    ex.candidates.push_back(std::move(rec));
  }
  ex.labels = {0, 1, 2, 3};
  const Labels labels = labels_from_example(ex);

  auto build = [&, labels](Tape& tape) {
    const EncoderVars enc = encoder_vars(tape, store);
    const DecoderVars dec = decoder_vars(tape, store);
    const auto embeddings = encode_all(tape, enc, ex);
    DecodeTrace trace = decode(tape, dec, embeddings, dec_cfg);
    // Deterministic stand-in samples so the finite differences see a
    // fixed trajectory; rewards stay constant under perturbation.
    for (std::size_t t = 0; t < trace.iterations.size(); ++t) {
      SampledPointers sp;
      for (std::size_t k = 0; k < kBlockSize; ++k) {
        sp.pointers[k] = static_cast<int>((t + 2 * k + 1) % n);
        sp.log_prob[k] =
            std::log(softmax(trace.iterations[t].scores.col[k])[static_cast<std::size_t>(sp.pointers[k])]);
      }
      trace.iterations[t].sampled = sp;
    }
    const RewardBundle rewards = compute_rewards(trace, ex, labels);
    std::vector<Var> losses = {ce_loss(tape, trace, labels),
                               rl_loss(tape, trace, rewards, RewardKind::overlap, 1.0),
                               rl_loss(tape, trace, rewards, RewardKind::diversity, 1.0),
                               rl_loss(tape, trace, rewards, RewardKind::mrr, 1.0)};
    std::vector<Var> weights = {tape.param(store.at("loss.s_ce")), tape.param(store.at("loss.s_f1")),
                                tape.param(store.at("loss.s_div")), tape.param(store.at("loss.s_mrr"))};
    return combine_losses(tape, losses, weights);
  };
  return run_one("encoder->decoder->combined-loss", 1e-3, store, build);
}

}  // namespace

std::vector<GradCheckResult> run_gradient_checks() {
  std::vector<GradCheckResult> results;
  Rng rng(77);

  {
    ParamStore store;
    store.create("a", random_tensor({3, 4}, rng));
    store.create("b", random_tensor({4, 2}, rng));
    results.push_back(run_one("matmul", 1e-4, store, [&](Tape& t) {
      Var prod = t.matmul(t.param(store.at("a")), t.param(store.at("b")));
      return t.sum(t.mul(prod, prod));
    }));
  }
  {
    ParamStore store;
    store.create("x", random_tensor({6}, rng));
    store.create("y", random_tensor({6}, rng));
    results.push_back(run_one("elementwise tanh/sigmoid/add/mul", 1e-4, store, [&](Tape& t) {
      Var x = t.param(store.at("x"));
      Var y = t.param(store.at("y"));
      return t.sum(t.mul(t.tanh(x), t.sigmoid(t.add(x, t.mul(x, y)))));
    }));
  }
  {
    ParamStore store;
    store.create("x", random_tensor({8}, rng));
    results.push_back(run_one("maxout", 1e-4, store, [&](Tape& t) {
      Var m = t.maxout(t.param(store.at("x")), 2);
      return t.sum(t.mul(m, m));
    }));
  }
  {
    ParamStore store;
    store.create("logits", random_tensor({7}, rng));
    results.push_back(run_one("softmax cross entropy", 1e-4, store, [&](Tape& t) {
      return t.softmax_cross_entropy(t.param(store.at("logits")), 3);
    }));
  }
  {
    ParamStore store;
    store.create("z", random_tensor({1}, rng));
    results.push_back(run_one("bce with logit", 1e-4, store, [&](Tape& t) {
      return t.add(t.bce_with_logit(t.param(store.at("z")), 1.0),
                   t.bce_with_logit(t.param(store.at("z")), 0.0));
    }));
  }
  {
    ParamStore store;
    Rng init(5);
    for (const char* gate : {"i", "f", "o", "g"}) {
      store.create_normal(std::string("w") + gate, {3, 4}, 0.5, init);
      store.create_normal(std::string("u") + gate, {3, 3}, 0.5, init);
      store.create_normal(std::string("b") + gate, {3}, 0.5, init);
    }
    const Tensor x = random_tensor({4}, rng, -1, 1);
    const Tensor h0 = random_tensor({3}, rng, -1, 1);
    const Tensor c0 = random_tensor({3}, rng, -1, 1);
    results.push_back(run_one("lstm cell", 1e-4, store, [&](Tape& t) {
      const LstmVars vars{t.param(store.at("wi")), t.param(store.at("ui")), t.param(store.at("bi")),
                          t.param(store.at("wf")), t.param(store.at("uf")), t.param(store.at("bf")),
                          t.param(store.at("wo")), t.param(store.at("uo")), t.param(store.at("bo")),
                          t.param(store.at("wg")), t.param(store.at("ug")), t.param(store.at("bg"))};
      const LstmStep step = lstm_cell(t, t.constant(x), t.constant(h0), t.constant(c0), vars);
      return t.sum(t.mul(step.h, step.h));
    }));
  }
  {
    ParamStore store;
    Rng init(6);
    register_encoder_params(store, EncoderConfig{4, 6, 4}, init);
    const auto q = rng.normal_vector(4);
    const auto s = rng.normal_vector(4);
    results.push_back(run_one("encoder pair", 1e-4, store, [&](Tape& t) {
      const Var e = encode_pair(t, encoder_vars(t, store), q, s);
      return t.sum(t.mul(e, e));
    }));
  }
  {
    ParamStore store;
    store.create("s", random_tensor({1}, rng, -0.5, 0.5));
    results.push_back(run_one("uncertainty combination", 1e-4, store, [&](Tape& t) {
      std::vector<Var> losses = {t.constant(Tensor::scalar(1.3))};
      std::vector<Var> weights = {t.param(store.at("s"))};
      return combine_losses(t, losses, weights);
    }));
  }
  results.push_back(full_model_pass());
  return results;
}

bool all_pass(const std::vector<GradCheckResult>& results) {
  for (const auto& r : results)
    if (!r.pass) return false;
  return true;
}

}  // namespace blockrec
