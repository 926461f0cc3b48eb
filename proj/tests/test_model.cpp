#include <cmath>

#include "doctest.h"
#include "groundloom/model.hpp"
#include "helpers.hpp"

using namespace groundloom;
using namespace groundloom::model;
using world::DifficultyTier;
using world::QuestionKind;

namespace {

PromptEncoding sample_prompt(std::uint64_t seed, const ModelConfig& cfg = {}) {
  const auto scene = world::generate_scene(seed, DifficultyTier::easy);
  const auto q = world::generate_question(scene, QuestionKind::count, seed + 1);
  return encode_input(scene, q, cfg);
}

TokenSeq sample_answer(std::uint64_t seed) {
  const auto scene = world::generate_scene(seed, DifficultyTier::easy);
  const auto q = world::generate_question(scene, QuestionKind::count, seed + 1);
  return world::grounded_answers(scene, q).canonical;
}

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.dim = 16;
  return cfg;
}

}  // namespace

TEST_CASE("init is deterministic per seed and validates config") {
  const ModelConfig cfg;
  const Params a = init_params(cfg, 5);
  const Params b = init_params(cfg, 5);
  CHECK(a.embed == b.embed);
  CHECK(a.wout == b.wout);
  const Params c = init_params(cfg, 6);
  CHECK(a.embed != c.embed);

  ModelConfig bad;
  bad.dim = 4;
  CHECK_THROWS_AS(init_params(bad, 0), ConfigError);
  ModelConfig tiny;
  tiny.vocab_size = 8;
  CHECK_THROWS_AS(init_params(tiny, 0), ConfigError);
}

TEST_CASE("zero-init gives uniform logits everywhere") {
  const Params p = Params::zeros(small_config());
  const auto x = sample_prompt(3, p.config);
  const Vec logits = forward_logits(p, x, {});
  for (int i = 0; i < p.config.vocab_size; ++i) CHECK(logits(i) == 0.0);

  // logprob of a length-T answer is exactly -T ln V
  const TokenSeq y = sample_answer(3);
  const Scalar lp = sequence_logprob(p, x, y);
  CHECK(lp == doctest::Approx(-static_cast<double>(y.size()) *
                              std::log(static_cast<double>(p.config.vocab_size)))
                  .epsilon(1e-12));
}

TEST_CASE("forward produces finite logits on random prompts") {
  const Params p = init_params({}, 11);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto x = sample_prompt(seed, p.config);
    const Vec logits = forward_logits(p, x, {});
    CHECK(logits.allFinite());
  }
}

TEST_CASE("softmax normalizes to one at every step") {
  const Params p = init_params(small_config(), 2);
  const auto x = sample_prompt(9, p.config);
  TokenSeq prefix;
  for (int step = 0; step < 4; ++step) {
    const Vec probs = softmax(forward_logits(p, x, prefix));
    CHECK(std::abs(probs.sum() - 1.0) < 1e-12);
    prefix.push_back(static_cast<TokenId>(step + 1));
  }
}

TEST_CASE("single-token answer probabilities sum to one") {
  const Params p = init_params(small_config(), 4);
  const auto x = sample_prompt(5, p.config);
  Scalar total = 0;
  for (int v = 0; v < p.config.vocab_size; ++v)
    total += std::exp(sequence_logprob(p, x, {static_cast<TokenId>(v)}));
  CHECK(std::abs(total - 1.0) < 1e-12);
}

TEST_CASE("sequence logprob equals the sum of stepwise logits") {
  const Params p = init_params(small_config(), 7);
  const auto x = sample_prompt(8, p.config);
  const TokenSeq y = sample_answer(8);
  Scalar stepwise = 0;
  TokenSeq prefix;
  for (TokenId t : y) {
    const Vec ls = log_softmax(forward_logits(p, x, prefix));
    stepwise += ls(t);
    prefix.push_back(t);
  }
  CHECK(sequence_logprob(p, x, y) == doctest::Approx(stepwise).epsilon(1e-12));
}

TEST_CASE("causality: next-token logits are invariant to later tokens") {
  // forward_logits computes the full sequence in one pass; the row that
  // predicts the next token after `prefix` must be bit-identical whether or
  // not more tokens follow. Compare the one-step path against the logprob
  // path that runs the longer sequence.
  const Params p = init_params(small_config(), 13);
  const auto x = sample_prompt(21, p.config);
  const TokenSeq y = {tok().digit[3], tok().digit[5], tok().eos};

  Scalar from_steps = 0;
  TokenSeq prefix;
  for (TokenId t : y) {
    from_steps += log_softmax(forward_logits(p, x, prefix))(t);
    prefix.push_back(t);
  }
  const Scalar from_full = sequence_logprob(p, x, y);
  CHECK(from_full == from_steps);  // exact, not approximate
}

TEST_CASE("perturbing unused embedding or position rows changes nothing") {
  Params p = init_params(small_config(), 17);
  const auto x = sample_prompt(2, p.config);
  const Vec base = forward_logits(p, x, {});

  // a padding-position row far beyond the sequence end
  p.pos.row(p.config.max_len - 1).array() += 100.0;
  const Vec after_pos = forward_logits(p, x, {});
  CHECK((base - after_pos).cwiseAbs().maxCoeff() == 0.0);

  // the pad token never occurs in prompts
  p.embed.row(tok().pad).array() += 50.0;
  const Vec after_embed = forward_logits(p, x, {});
  CHECK((base - after_embed).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gradient of unused rows is zero and scaling is linear") {
  const Params p = init_params(small_config(), 23);
  const auto x = sample_prompt(4, p.config);
  const TokenSeq y = sample_answer(4);
  const Grads g = grad_logprob(p, x, y);
  CHECK(g.pos.row(p.config.max_len - 1).cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.embed.row(tok().pad).cwiseAbs().maxCoeff() == 0.0);

  Grads doubled = Grads::zeros_like(p);
  doubled.add_scaled(g, 2.0);
  CHECK(doubled.wout == (2.0 * g.wout).eval());
}

TEST_CASE("analytic gradient matches central finite differences") {
  Params p = init_params(small_config(), 31);
  const auto x = sample_prompt(6, p.config);
  const TokenSeq y = sample_answer(6);
  const Grads g = grad_logprob(p, x, y);
  const auto rep = testutil::fd_check(
      p, g, [&](const Params& q) { return sequence_logprob(q, x, y); }, 150, 777);
  CHECK(rep.failed == 0);
  CHECK(rep.checked == 150);
  CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("prompt encoding masks hidden objects") {
  auto scene = world::generate_scene(12, DifficultyTier::easy);
  scene.objects[0].occlusion = world::Occlusion::hidden;
  scene.objects[0].label.reset();
  const auto q = world::generate_question(scene, QuestionKind::existence, 1);
  const auto enc = encode_input(scene, q);
  int hidden_count = 0;
  for (TokenId t : enc.tokens) hidden_count += (t == tok().hidden);
  CHECK(hidden_count == 1);

  bool other_shares = false;
  for (std::size_t i = 1; i < scene.objects.size(); ++i)
    other_shares |= scene.objects[i].color == scene.objects[0].color;
  if (!other_shares) {
    // the hidden object's color token must not leak into the scene block
    const TokenId color_tok = tok().color[static_cast<int>(scene.objects[0].color)];
    for (TokenId t : enc.tokens) {
      if (t == tok().sep) break;
      CHECK(t != color_tok);
    }
  }
}

TEST_CASE("two scenes differing in one color differ in exactly one prompt token") {
  auto scene = world::generate_scene(14, DifficultyTier::easy);
  auto scene2 = scene;
  scene2.objects[0].color =
      scene.objects[0].color == world::Color::red ? world::Color::blue : world::Color::red;
  const auto q = world::generate_question(scene, QuestionKind::count, 3);
  const auto a = encode_input(scene, q);
  const auto b = encode_input(scene2, q);
  REQUIRE(a.tokens.size() == b.tokens.size());
  int diffs = 0;
  for (std::size_t i = 0; i < a.tokens.size(); ++i) diffs += (a.tokens[i] != b.tokens[i]);
  CHECK(diffs == 1);
}

TEST_CASE("prompt length overflow raises a length error") {
  const auto scene = world::generate_scene(1, DifficultyTier::hard);
  const auto q = world::generate_question(scene, QuestionKind::count, 2);
  ModelConfig cramped;
  cramped.max_len = 24;
  cramped.max_answer_len = 16;
  CHECK_THROWS_AS(encode_input(scene, q, cramped), LengthError);
}

TEST_CASE("minimal scene yields a separator-adjacent prompt") {
  world::Scene empty;
  empty.grid_w = empty.grid_h = 8;
  world::QuestionTarget t;
  t.category = world::Category::dog;
  const auto q = world::make_question(QuestionKind::existence, t, DifficultyTier::easy);
  const auto enc = encode_input(empty, q);
  REQUIRE(enc.tokens.size() >= 4);
  CHECK(enc.tokens[1] == tok().sep);  // nothing between lighting and separator
  CHECK(enc.tokens.back() == tok().ans);
}

TEST_CASE("decoding config validation") {
  DecodingConfig bad;
  bad.temperature = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  DecodingConfig badk;
  badk.k = 0;
  CHECK_THROWS_AS(badk.validate(), ConfigError);
  DecodingConfig badp;
  badp.p = 0.0;
  CHECK_THROWS_AS(badp.validate(), ConfigError);
}

TEST_CASE("top-k with k=1 reduces to greedy") {
  const Params p = init_params(small_config(), 41);
  const auto x = sample_prompt(10, p.config);
  DecodingConfig greedy;
  DecodingConfig topk;
  topk.strategy = DecodeStrategy::top_k;
  topk.k = 1;
  topk.seed = 99;
  CHECK(decode(p, x, greedy) == decode(p, x, topk));
}

TEST_CASE("top-p with p=1 and temperature 1 equals unrestricted sampling") {
  const Params p = init_params(small_config(), 43);
  const auto x = sample_prompt(15, p.config);
  DecodingConfig topp;
  topp.strategy = DecodeStrategy::top_p;
  topp.p = 1.0;
  topp.seed = 5;
  DecodingConfig temp;
  temp.strategy = DecodeStrategy::temperature;
  temp.temperature = 1.0;
  temp.seed = 5;
  CHECK(decode(p, x, topp) == decode(p, x, temp));
}

TEST_CASE("stochastic decoding is deterministic per seed") {
  const Params p = init_params(small_config(), 47);
  const auto x = sample_prompt(16, p.config);
  DecodingConfig cfg;
  cfg.strategy = DecodeStrategy::top_p;
  cfg.p = 0.9;
  cfg.seed = 1234;
  CHECK(decode(p, x, cfg) == decode(p, x, cfg));
}

TEST_CASE("sampled next-token frequencies match softmax probabilities") {
  const Params p = init_params(small_config(), 53);
  const auto x = sample_prompt(20, p.config);
  const Vec probs = softmax(forward_logits(p, x, {}));

  const int n = 50000;
  std::vector<int> counts(static_cast<std::size_t>(p.config.vocab_size), 0);
  DecodingConfig cfg;
  cfg.strategy = DecodeStrategy::temperature;
  cfg.temperature = 1.0;
  cfg.max_len = 1;
  for (int i = 0; i < n; ++i) {
    cfg.seed = static_cast<std::uint64_t>(i);
    const TokenSeq out = decode(p, x, cfg);
    REQUIRE(out.size() == 1);
    ++counts[static_cast<std::size_t>(out[0])];
  }
  for (int v = 0; v < p.config.vocab_size; ++v) {
    const double freq = static_cast<double>(counts[static_cast<std::size_t>(v)]) / n;
    CHECK(std::abs(freq - probs(v)) < 0.01);
  }
}

TEST_CASE("decode stops at eos or max_len") {
  const Params p = init_params(small_config(), 59);
  const auto x = sample_prompt(22, p.config);
  DecodingConfig cfg;
  cfg.max_len = 5;
  const TokenSeq out = decode(p, x, cfg);
  CHECK(out.size() <= 5);
  if (out.size() < 5) CHECK(out.back() == tok().eos);
}
