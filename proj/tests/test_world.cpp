#include <array>
#include <set>

#include "doctest.h"
#include "groundloom/serialize.hpp"
#include "groundloom/world.hpp"
#include "helpers.hpp"

using namespace groundloom;
using namespace groundloom::world;

namespace {

Scene tiny_scene() {
  // One red small wooden cup at (1,1), one blue large metal box at (5,2).
  Scene s;
  s.seed = 42;
  s.grid_w = s.grid_h = 8;
  s.lighting = Lighting::bright;
  s.tier = DifficultyTier::easy;
  SceneObject cup;
  cup.id = 0;
  cup.category = Category::cup;
  cup.color = Color::red;
  cup.size = ObjSize::small;
  cup.material = Material::wood;
  cup.col = 1;
  cup.row = 1;
  SceneObject box;
  box.id = 1;
  box.category = Category::box;
  box.color = Color::blue;
  box.size = ObjSize::large;
  box.material = Material::metal;
  box.col = 5;
  box.row = 2;
  s.objects = {cup, box};
  return s;
}

Question count_question(Category cat) {
  QuestionTarget t;
  t.category = cat;
  return make_question(QuestionKind::count, t, DifficultyTier::easy);
}

}  // namespace

TEST_CASE("scene generation is deterministic and byte-stable") {
  const Scene a = generate_scene(0, DifficultyTier::easy);
  const Scene b = generate_scene(0, DifficultyTier::easy);
  CHECK(io::to_json(a).dump() == io::to_json(b).dump());
  const Scene c = generate_scene(1, DifficultyTier::easy);
  CHECK(io::to_json(a).dump() != io::to_json(c).dump());
}

TEST_CASE("scene respects tier bounds, grid and cell exclusivity") {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    for (auto tier : {DifficultyTier::easy, DifficultyTier::hard}) {
      const Scene s = generate_scene(seed, tier);
      const int n = static_cast<int>(s.objects.size());
      if (tier == DifficultyTier::easy) {
        CHECK(n >= 2);
        CHECK(n <= 5);
      } else {
        CHECK(n >= 4);
        CHECK(n <= 9);
      }
      std::set<std::pair<int, int>> cells;
      for (const auto& o : s.objects) {
        CHECK(o.col >= 0);
        CHECK(o.col < s.grid_w);
        CHECK(o.row >= 0);
        CHECK(o.row < s.grid_h);
        CHECK(cells.insert({o.col, o.row}).second);
      }
    }
  }
}

TEST_CASE("invalid world config is rejected") {
  WorldConfig cfg;
  cfg.grid_w = 3;
  CHECK_THROWS_AS(generate_scene(0, DifficultyTier::easy, cfg), ConfigError);
  WorldConfig cfg2;
  cfg2.easy_min_objects = 6;
  cfg2.easy_max_objects = 2;
  CHECK_THROWS_AS(generate_scene(0, DifficultyTier::easy, cfg2), ConfigError);
}

TEST_CASE("category frequencies are near uniform over many seeds") {
  std::array<long, kNumCategories> counts{};
  long total = 0;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    const Scene s = generate_scene(seed, DifficultyTier::easy);
    for (const auto& o : s.objects) {
      ++counts[static_cast<std::size_t>(o.category)];
      ++total;
    }
  }
  const double uniform = 1.0 / kNumCategories;
  for (long c : counts) {
    const double freq = static_cast<double>(c) / static_cast<double>(total);
    CHECK(std::abs(freq - uniform) < 0.02);
  }
}

TEST_CASE("question generation is deterministic and typed") {
  const Scene s = generate_scene(7, DifficultyTier::easy);
  const Question a = generate_question(s, QuestionKind::existence, 3);
  const Question b = generate_question(s, QuestionKind::existence, 3);
  CHECK(a.tokens == b.tokens);
  CHECK(a.kind == QuestionKind::existence);
  CHECK(a.target.category.has_value());
}

TEST_CASE("false premise questions reference absent combinations") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Scene s = generate_scene(seed, DifficultyTier::easy);
    const Question q = generate_question(s, QuestionKind::false_premise, seed + 1);
    REQUIRE(q.target.category.has_value());
    int matching = 0;
    for (const auto& o : s.objects) {
      if (!observable(o) || o.category != *q.target.category) continue;
      if (q.target.color && (!color_observable(s, o) || o.color != *q.target.color)) continue;
      ++matching;
    }
    CHECK(matching == 0);
  }
}

TEST_CASE("unanswerable property question targets a rendered object") {
  const Scene s = generate_scene(11, DifficultyTier::easy);
  const Question q = generate_question(s, QuestionKind::unanswerable_property, 5);
  CHECK(q.target.prop.has_value());
  const AnswerSpec spec = grounded_answers(s, q);
  CHECK(spec.requires_abstention);
  const auto verdict = judge_response(s, q, spec.canonical);
  CHECK(verdict.grounded);
  CHECK(verdict.abstained);
}

TEST_CASE("spatial relation needs two observable objects") {
  Scene s = tiny_scene();
  s.objects.resize(1);
  CHECK_THROWS_AS(generate_question(s, QuestionKind::spatial_relation, 0), UnrealizableError);
}

TEST_CASE("count oracle matches construction") {
  Scene s = tiny_scene();
  SceneObject extra = s.objects[0];
  extra.id = 2;
  extra.col = 3;
  extra.row = 4;
  s.objects.push_back(extra);
  SceneObject extra2 = s.objects[0];
  extra2.id = 3;
  extra2.col = 6;
  extra2.row = 6;
  s.objects.push_back(extra2);

  const Question q = count_question(Category::cup);
  const AnswerSpec spec = grounded_answers(s, q);
  CHECK(spec.canonical[0] == tok().c_count);
  CHECK(spec.canonical[2] == tok().digit[3]);
  CHECK(judge_response(s, q, spec.canonical).grounded);
}

TEST_CASE("claims about absent categories are rejected with a reason") {
  const Scene s = tiny_scene();
  const Question q = count_question(Category::cup);
  Claim bogus;
  bogus.kind = ClaimKind::exists;
  bogus.category = Category::dog;
  const auto verdict = judge_response(s, q, render_response({bogus}));
  CHECK_FALSE(verdict.grounded);
  REQUIRE(verdict.invalid_claims.size() == 1);
  CHECK(verdict.invalid_claims[0].reason == "nonexistent object");
}

TEST_CASE("validated claims are counted per clause") {
  const Scene s = tiny_scene();
  const Question q = count_question(Category::cup);
  Claim count;
  count.kind = ClaimKind::count;
  count.category = Category::cup;
  count.value = tok().digit[1];
  Claim color;
  color.kind = ClaimKind::attr;
  color.category = Category::cup;
  color.attr_kind = AttrKind::color;
  color.value = tok().color[static_cast<int>(Color::red)];
  Claim size;
  size.kind = ClaimKind::attr;
  size.category = Category::cup;
  size.attr_kind = AttrKind::size;
  size.value = tok().size[static_cast<int>(ObjSize::small)];
  const auto verdict = judge_response(s, q, render_response({count, color, size}));
  CHECK(verdict.grounded);
  CHECK(verdict.validated_claims == 3);
}

TEST_CASE("oracle self-consistency across kinds and tiers") {
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    for (auto tier : {DifficultyTier::easy, DifficultyTier::hard}) {
      const Scene s = generate_scene(seed, tier);
      for (int k = 0; k < kNumQuestionKinds; ++k) {
        Question q;
        try {
          q = generate_question(s, static_cast<QuestionKind>(k), seed * 17 + k);
        } catch (const UnrealizableError&) {
          continue;
        }
        const AnswerSpec spec = grounded_answers(s, q);
        const auto verdict = judge_response(s, q, spec.canonical);
        CHECK(verdict.grounded);
        ++checked;
      }
    }
  }
  CHECK(checked > 400);
}

TEST_CASE("claim monotonicity: valid claims keep grounding, invalid ones break it") {
  const Scene s = tiny_scene();
  const Question q = count_question(Category::cup);
  const AnswerSpec spec = grounded_answers(s, q);
  auto claims = parse_claims(spec.canonical).claims;

  Claim good;
  good.kind = ClaimKind::attr;
  good.category = Category::box;
  good.attr_kind = AttrKind::color;
  good.value = tok().color[static_cast<int>(Color::blue)];
  auto extended = claims;
  extended.push_back(good);
  CHECK(judge_response(s, q, render_response(extended)).grounded);

  Claim bad = good;
  bad.value = tok().color[static_cast<int>(Color::purple)];
  extended.push_back(bad);
  CHECK_FALSE(judge_response(s, q, render_response(extended)).grounded);
}

TEST_CASE("dim lighting makes colors unobservable and abstention grounded") {
  Scene s = tiny_scene();
  s.lighting = Lighting::dim;
  QuestionTarget t;
  t.category = Category::cup;
  const Question q = make_question(QuestionKind::color_attr, t, DifficultyTier::hard);
  const AnswerSpec spec = grounded_answers(s, q);
  CHECK(spec.requires_abstention);
  const auto verdict = judge_response(s, q, spec.canonical);
  CHECK(verdict.grounded);
  CHECK(verdict.abstained);

  // Asserting a specific color under dim light is a hallucination.
  Claim red;
  red.kind = ClaimKind::attr;
  red.category = Category::cup;
  red.attr_kind = AttrKind::color;
  red.value = tok().color[static_cast<int>(Color::red)];
  const auto bad = judge_response(s, q, render_response({red}));
  CHECK_FALSE(bad.grounded);
  CHECK_FALSE(bad.abstained);
}

TEST_CASE("hidden objects contribute no claims") {
  Scene s = tiny_scene();
  s.objects[1].occlusion = Occlusion::hidden;
  Claim exists_box;
  exists_box.kind = ClaimKind::exists;
  exists_box.category = Category::box;
  CHECK(check_claim(s, exists_box).invalid);
  // counting sees only observable objects
  const Question q = count_question(Category::box);
  const AnswerSpec spec = grounded_answers(s, q);
  CHECK(spec.canonical[2] == tok().digit[0]);
}

TEST_CASE("ocr reading follows the legibility mask") {
  Scene s = tiny_scene();
  TextLabel lab;
  lab.text = "ABC";
  lab.legible_mask = 0b101;  // A and C readable
  s.objects[0].label = lab;
  QuestionTarget t;
  t.category = Category::cup;
  const Question q = make_question(QuestionKind::ocr_read, t, DifficultyTier::easy);
  const AnswerSpec spec = grounded_answers(s, q);

  Claim reading;
  reading.kind = ClaimKind::text;
  reading.category = Category::cup;
  reading.text = {tok().ocr[0], tok().ocr[2]};  // "AC"
  CHECK(spec.acceptable.front() == reading);
  CHECK(judge_response(s, q, render_response({reading})).grounded);

  // A claim containing the illegible middle character is fabricated.
  Claim fabricated = reading;
  fabricated.text = {tok().ocr[0], tok().ocr[1], tok().ocr[2]};
  const auto verdict = judge_response(s, q, render_response({fabricated}));
  CHECK_FALSE(verdict.grounded);
  CHECK(verdict.invalid_claims[0].reason == "fabricated text");

  // All bits off: abstention is the only grounded answer.
  s.objects[0].label->legible_mask = 0;
  const AnswerSpec spec2 = grounded_answers(s, q);
  CHECK(spec2.requires_abstention);
  CHECK(judge_response(s, q, spec2.canonical).grounded);
}

TEST_CASE("false premise rejection and compliance") {
  const Scene s = tiny_scene();  // no dog anywhere
  QuestionTarget t;
  t.category = Category::dog;
  t.attr = AttrKind::color;
  const Question q = make_question(QuestionKind::false_premise, t, DifficultyTier::hard);
  const AnswerSpec spec = grounded_answers(s, q);
  CHECK(spec.requires_rejection);

  const auto good = judge_response(s, q, spec.canonical);
  CHECK(good.grounded);
  CHECK(good.premise_rejected);

  Claim comply;
  comply.kind = ClaimKind::attr;
  comply.category = Category::dog;
  comply.attr_kind = AttrKind::color;
  comply.value = tok().color[static_cast<int>(Color::black)];
  const auto bad = judge_response(s, q, render_response({comply}));
  CHECK_FALSE(bad.grounded);
  CHECK_FALSE(bad.premise_rejected);
  CHECK(bad.invalid_claims[0].reason == "nonexistent object");
}

TEST_CASE("relation ties accept any satisfying pair") {
  Scene s = tiny_scene();  // cup (1,1), box (5,2)
  QuestionTarget t;
  t.category = Category::cup;
  t.category_b = Category::box;
  const Question q = make_question(QuestionKind::spatial_relation, t, DifficultyTier::easy);
  const AnswerSpec spec = grounded_answers(s, q);
  // cup is both left of and above the box; either claim is acceptable
  CHECK(spec.acceptable.size() == 2);
  for (const auto& c : spec.acceptable) CHECK(judge_response(s, q, render_response({c})).grounded);

  Claim wrong;
  wrong.kind = ClaimKind::rel;
  wrong.category = Category::cup;
  wrong.category_b = Category::box;
  wrong.relation = Relation::right_of;
  CHECK_FALSE(judge_response(s, q, render_response({wrong})).grounded);
}

TEST_CASE("parser round-trips claims and flags garbage") {
  const Scene s = tiny_scene();
  Claim c;
  c.kind = ClaimKind::count;
  c.category = Category::cup;
  c.value = tok().digit[1];
  const TokenSeq tokens = render_response({c});
  const ParseResult parsed = parse_claims(tokens);
  REQUIRE(parsed.claims.size() == 1);
  CHECK_FALSE(parsed.trailing_unparseable);
  CHECK(parsed.claims[0] == c);

  TokenSeq garbage = {tok().q_count, tok().category[0]};
  const ParseResult bad = parse_claims(garbage);
  CHECK(bad.trailing_unparseable);
  const auto verdict = judge_response(s, count_question(Category::cup), garbage);
  CHECK_FALSE(verdict.grounded);
  CHECK(verdict.invalid_claims[0].reason == "unparseable");

  // dangling connective
  TokenSeq dangling = claim_tokens(c);
  dangling.push_back(tok().conj);
  dangling.push_back(tok().eos);
  CHECK(parse_claims(dangling).trailing_unparseable);
}

TEST_CASE("scene json round trip") {
  const Scene s = generate_scene(99, DifficultyTier::hard);
  const auto j = io::to_json(s);
  const Scene back = io::scene_from_json(j);
  CHECK(io::to_json(back).dump() == j.dump());
}

TEST_CASE("sibling map is an involution") {
  for (int c = 0; c < kNumCategories; ++c) {
    const auto cat = static_cast<Category>(c);
    CHECK(sibling_category(cat) != cat);
    CHECK(sibling_category(sibling_category(cat)) == cat);
  }
}

TEST_CASE("oracle reward levels") {
  const Scene s = tiny_scene();
  const Question q = count_question(Category::cup);
  const AnswerSpec spec = grounded_answers(s, q);
  CHECK(oracle_reward(judge_response(s, q, spec.canonical)) == 1.0);

  // harmless but incomplete: a true claim that does not answer the question
  Claim aside;
  aside.kind = ClaimKind::exists;
  aside.category = Category::box;
  CHECK(oracle_reward(judge_response(s, q, render_response({aside}))) == 0.0);

  Claim wrong;
  wrong.kind = ClaimKind::count;
  wrong.category = Category::cup;
  wrong.value = tok().digit[7];
  CHECK(oracle_reward(judge_response(s, q, render_response({wrong}))) == -1.0);
}
