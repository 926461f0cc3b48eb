#include <cmath>

#include "doctest.h"
#include "groundloom/objectives.hpp"
#include "groundloom/rng.hpp"
#include "helpers.hpp"

using namespace groundloom;
using namespace groundloom::objectives;
using model::DecodingConfig;
using model::ModelConfig;
using model::PromptEncoding;
using groundloom::Vec;

namespace {

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.dim = 16;
  return cfg;
}

PromptEncoding prompt_for(std::uint64_t seed, const ModelConfig& cfg) {
  const auto scene = world::generate_scene(seed, world::DifficultyTier::easy);
  const auto q = world::generate_question(scene, world::QuestionKind::count, seed + 1);
  return model::encode_input(scene, q, cfg);
}

TokenSeq answer_for(std::uint64_t seed) {
  const auto scene = world::generate_scene(seed, world::DifficultyTier::easy);
  const auto q = world::generate_question(scene, world::QuestionKind::count, seed + 1);
  return world::grounded_answers(scene, q).canonical;
}

std::vector<PreferencePair> sample_pairs(const ModelConfig& cfg, int n) {
  std::vector<PreferencePair> pairs;
  for (int i = 0; i < n; ++i) {
    PreferencePair p;
    p.x = prompt_for(static_cast<std::uint64_t>(30 + i), cfg);
    p.y_plus = answer_for(static_cast<std::uint64_t>(30 + i));
    p.y_minus = p.y_plus;
    // flip the digit so the pair is genuinely distinct
    for (auto& t : p.y_minus)
      if (is_digit_token(t)) t = tok().digit[(t - tok().digit[0] + 1) % 10];
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace

TEST_CASE("ce loss on zero-init params is T ln V") {
  const auto cfg = small_config();
  const model::Params p = model::Params::zeros(cfg);
  const auto x = prompt_for(3, cfg);
  const TokenSeq y = answer_for(3);
  auto res = ce_loss(p, {{x, y}});
  CHECK(res.loss ==
        doctest::Approx(y.size() * std::log(static_cast<double>(cfg.vocab_size))).epsilon(1e-12));
  CHECK_THROWS_AS(ce_loss(p, {}), ArgumentError);
}

TEST_CASE("ce loss approaches zero for a one-hot-perfect construction") {
  ModelConfig cfg;
  cfg.dim = 16;
  cfg.max_len = 16;
  cfg.max_answer_len = 8;
  model::Params p = model::Params::zeros(cfg);

  PromptEncoding x;
  x.tokens = {tok().bright, tok().sep, tok().q_exists, tok().category[0], tok().ans};
  const TokenSeq y = {tok().c_exists, tok().category[0], tok().eos};

  // route position one-hots straight to the desired output tokens
  const double big = 50.0;
  for (std::size_t t = 0; t < y.size(); ++t) {
    const int row = static_cast<int>(x.tokens.size()) - 1 + static_cast<int>(t);
    p.pos(row, row) = 1.0;
    p.wout(row, y[t]) = big;
  }
  auto res = ce_loss(p, {{x, y}});
  CHECK(res.loss < 1e-3);
}

TEST_CASE("ce gradient matches finite differences") {
  const auto cfg = small_config();
  model::Params p = model::init_params(cfg, 71);
  std::vector<std::pair<PromptEncoding, TokenSeq>> batch;
  for (std::uint64_t s = 0; s < 3; ++s) batch.emplace_back(prompt_for(s, cfg), answer_for(s));
  const auto res = ce_loss(p, batch);
  const auto rep = testutil::fd_check(
      p, res.grad, [&](const model::Params& q) { return ce_loss(q, batch).loss; }, 120, 404);
  CHECK(rep.failed == 0);
  CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("dpo loss at the reference point is exactly ln 2") {
  const auto cfg = small_config();
  const model::Params p = model::init_params(cfg, 5);
  const auto pairs = sample_pairs(cfg, 4);
  DpoConfig dcfg;
  dcfg.reference = &p;
  const auto res = dpo_loss(p, dcfg, pairs);
  CHECK(std::abs(res.loss - std::log(2.0)) < 1e-9);

  // and its gradient is -(beta/2) * mean(grad lp+ - grad lp-)
  model::Grads expect = model::Grads::zeros_like(p);
  for (const auto& pr : pairs) {
    expect.add_scaled(model::grad_logprob(p, pr.x, pr.y_plus), -dcfg.beta_dpo / 2);
    expect.add_scaled(model::grad_logprob(p, pr.x, pr.y_minus), dcfg.beta_dpo / 2);
  }
  expect.scale(1.0 / static_cast<double>(pairs.size()));
  CHECK((res.grad.wout - expect.wout).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((res.grad.embed - expect.embed).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("dpo loss decreases when the preferred logprob rises") {
  const auto cfg = small_config();
  const model::Params p = model::init_params(cfg, 7);
  const model::Params ref = model::init_params(cfg, 8);
  const auto pairs = sample_pairs(cfg, 2);
  DpoConfig dcfg;
  dcfg.reference = &ref;

  // raising lr+ lowers the implicit margin; loss must strictly increase
  std::vector<std::pair<Scalar, Scalar>> cache;
  for (const auto& pr : pairs)
    cache.emplace_back(model::sequence_logprob(ref, pr.x, pr.y_plus),
                       model::sequence_logprob(ref, pr.x, pr.y_minus));
  const double base = dpo_loss(p, dcfg, pairs, &cache).loss;
  for (auto& c : cache) c.first += 1.0;
  const double worse = dpo_loss(p, dcfg, pairs, &cache).loss;
  CHECK(worse > base);
}

TEST_CASE("dpo rejects invalid configuration") {
  const auto cfg = small_config();
  const model::Params p = model::init_params(cfg, 9);
  const auto pairs = sample_pairs(cfg, 1);
  DpoConfig no_ref;
  CHECK_THROWS_AS(dpo_loss(p, no_ref, pairs), ConfigError);

  ModelConfig other = cfg;
  other.dim = 32;
  const model::Params mismatched = model::init_params(other, 1);
  DpoConfig bad;
  bad.reference = &mismatched;
  CHECK_THROWS_AS(dpo_loss(p, bad, pairs), ConfigError);
  DpoConfig ok;
  ok.reference = &p;
  CHECK_THROWS_AS(dpo_loss(p, ok, {}), ArgumentError);
}

TEST_CASE("dpo gradient matches finite differences away from the reference") {
  const auto cfg = small_config();
  model::Params p = model::init_params(cfg, 11);
  const model::Params ref = model::init_params(cfg, 12);
  const auto pairs = sample_pairs(cfg, 2);
  DpoConfig dcfg;
  dcfg.reference = &ref;
  const auto res = dpo_loss(p, dcfg, pairs);
  const auto rep = testutil::fd_check(
      p, res.grad, [&](const model::Params& q) { return dpo_loss(q, dcfg, pairs).loss; }, 120,
      2024);
  CHECK(rep.failed == 0);
  CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("one small dpo step improves the margin on that pair") {
  const auto cfg = small_config();
  const model::Params ref = model::init_params(cfg, 21);
  auto pairs = sample_pairs(cfg, 1);
  DpoConfig dcfg;
  dcfg.reference = &ref;
  const auto res = dpo_loss(ref, dcfg, pairs);

  model::Params stepped = ref;
  const double lr = 1e-2;
  stepped.embed -= lr * res.grad.embed;
  stepped.pos -= lr * res.grad.pos;
  stepped.wq -= lr * res.grad.wq;
  stepped.wk -= lr * res.grad.wk;
  stepped.wv -= lr * res.grad.wv;
  stepped.wo -= lr * res.grad.wo;
  stepped.w1 -= lr * res.grad.w1;
  stepped.w2 -= lr * res.grad.w2;
  stepped.wout -= lr * res.grad.wout;

  auto margin = [&](const model::Params& m) {
    return model::sequence_logprob(m, pairs[0].x, pairs[0].y_plus) -
           model::sequence_logprob(m, pairs[0].x, pairs[0].y_minus);
  };
  CHECK(margin(stepped) > margin(ref));
}

TEST_CASE("group advantages normalize to zero mean and unit deviation") {
  CHECK(group_advantages({1, 1, 1}) == std::vector<Scalar>{0, 0, 0});
  const auto two = group_advantages({2, 0});
  CHECK(two[0] == doctest::Approx(1.0));
  CHECK(two[1] == doctest::Approx(-1.0));
  CHECK_THROWS_AS(group_advantages({1}), ArgumentError);

  Rng rng(55);
  std::vector<Scalar> rewards;
  for (int i = 0; i < 9; ++i) rewards.push_back(rng.uniform() * 10 - 5);
  const auto adv = group_advantages(rewards);
  Scalar mean = 0;
  for (Scalar a : adv) mean += a;
  mean /= static_cast<Scalar>(adv.size());
  CHECK(std::abs(mean) < 1e-12);
  Scalar var = 0;
  for (Scalar a : adv) var += (a - mean) * (a - mean);
  var /= static_cast<Scalar>(adv.size());
  CHECK(std::sqrt(var) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("grpo loss identities and gradient") {
  const auto cfg = small_config();
  model::Params p = model::init_params(cfg, 33);

  ResponseGroup g;
  g.x = prompt_for(40, cfg);
  g.candidates = {{answer_for(40), 1.0}, {answer_for(41), 1.0}};
  g.advantages = {0.0, 0.0};
  auto zero = grpo_loss(p, {g});
  CHECK(zero.loss == 0.0);
  CHECK(zero.grad.squared_norm() == 0.0);

  ResponseGroup unfilled = g;
  unfilled.advantages.clear();
  CHECK_THROWS_AS(grpo_loss(p, {unfilled}), StateError);

  g.advantages = {1.0, -1.0};
  const auto res = grpo_loss(p, {g});
  const Scalar lp1 = model::sequence_logprob(p, g.x, g.candidates[0].first);
  const Scalar lp2 = model::sequence_logprob(p, g.x, g.candidates[1].first);
  CHECK(res.loss == doctest::Approx(lp2 - lp1).epsilon(1e-12));

  const auto rep = testutil::fd_check(
      p, res.grad, [&](const model::Params& q) { return grpo_loss(q, {g}).loss; }, 120, 31337);
  CHECK(rep.failed == 0);
  CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("grpo groups can be scored by the oracle") {
  const auto cfg = small_config();
  const auto scene = world::generate_scene(77, world::DifficultyTier::easy);
  const auto q = world::generate_question(scene, world::QuestionKind::count, 78);
  const auto spec = world::grounded_answers(scene, q);

  ResponseGroup g;
  g.x = model::encode_input(scene, q, cfg);
  TokenSeq wrong = spec.canonical;
  for (auto& t : wrong)
    if (is_digit_token(t)) t = tok().digit[(t - tok().digit[0] + 1) % 10];
  g.candidates = {
      {spec.canonical, world::oracle_reward(world::judge_response(scene, q, spec.canonical))},
      {wrong, world::oracle_reward(world::judge_response(scene, q, wrong))}};
  fill_advantages(g);
  CHECK(g.candidates[0].second == 1.0);
  CHECK(g.candidates[1].second == -1.0);
  CHECK(g.advantages[0] == doctest::Approx(1.0));
  CHECK(g.advantages[1] == doctest::Approx(-1.0));
}

TEST_CASE("kl to reference is zero at the reference and nonnegative elsewhere") {
  const auto cfg = small_config();
  const model::Params p = model::init_params(cfg, 61);
  const model::Params other = model::init_params(cfg, 62);
  std::vector<PromptEncoding> prompts = {prompt_for(50, cfg), prompt_for(51, cfg)};
  CHECK(kl_to_reference(p, p, prompts, 4) == 0.0);
  CHECK(kl_to_reference(p, other, prompts, 4) >= 0.0);
  CHECK_THROWS_AS(kl_to_reference(p, other, {}, 4), ArgumentError);
}

TEST_CASE("kl matches an independent full-vocabulary summation") {
  const auto cfg = small_config();
  const model::Params p = model::init_params(cfg, 63);
  const model::Params ref = model::init_params(cfg, 64);
  std::vector<PromptEncoding> prompts = {prompt_for(52, cfg)};
  const int probe_len = 4;
  const Scalar got = kl_to_reference(p, ref, prompts, probe_len);

  // oracle: re-derive the reference-greedy continuation with decode() and
  // sum p * (log p - log q) from raw probabilities
  DecodingConfig greedy;
  greedy.max_len = probe_len;
  const TokenSeq cont = model::decode(ref, prompts[0], greedy);
  Scalar total = 0;
  int positions = 0;
  TokenSeq prefix;
  for (TokenId t : cont) {
    const Vec probs_p = model::softmax(model::forward_logits(p, prompts[0], prefix));
    const Vec probs_r = model::softmax(model::forward_logits(ref, prompts[0], prefix));
    for (int v = 0; v < cfg.vocab_size; ++v)
      total += probs_p(v) * (std::log(probs_p(v)) - std::log(probs_r(v)));
    ++positions;
    prefix.push_back(t);
  }
  CHECK(std::abs(got - total / positions) < 1e-10);
}
