#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "groundloom/types.hpp"
#include "groundloom/vocab.hpp"

namespace groundloom::world {

enum class Category : std::uint8_t { cup, bowl, book, box, dog, cat, car, bus, lamp, clock, plant, ball };
enum class Color : std::uint8_t { red, blue, green, yellow, black, white, orange, purple };
enum class ObjSize : std::uint8_t { small, medium, large };
enum class Material : std::uint8_t { wood, metal, plastic, glass, fabric, unknown };
enum class Lighting : std::uint8_t { bright, dim };
enum class Occlusion : std::uint8_t { visible, partial, hidden };
enum class DifficultyTier : std::uint8_t { easy, hard };
enum class Relation : std::uint8_t { left_of, right_of, above, below };
enum class AttrKind : std::uint8_t { color, material, size };
enum class PropKind : std::uint8_t { price, pages, weight, brand, age };

enum class QuestionKind : std::uint8_t {
  existence,
  count,
  color_attr,
  material_attr,
  spatial_relation,
  ocr_read,
  false_premise,
  unanswerable_property,
};
inline constexpr int kNumQuestionKinds = 8;

// Text rendered on an object. Characters index into the 16-symbol OCR
// alphabet; bit i of legible_mask marks character i as readable.
struct TextLabel {
  std::string text;
  std::uint32_t legible_mask = 0;
};

struct SceneObject {
  int id = 0;
  Category category{};
  Color color{};
  ObjSize size{};
  Material material{};
  int col = 0, row = 0;
  Occlusion occlusion = Occlusion::visible;
  std::optional<TextLabel> label;
};

struct WorldConfig {
  int grid_w = 8;
  int grid_h = 8;
  int easy_min_objects = 2, easy_max_objects = 5;
  int hard_min_objects = 4, hard_max_objects = 9;
  double hard_dim_prob = 0.5;
  double hard_partial_prob = 0.30;
  double hard_hidden_prob = 0.15;
  double extra_label_prob = 0.20;  // easy tier, beyond the guaranteed label
  double hard_label_prob = 0.35;
  int max_labeled = 3;
  int min_label_len = 1, max_label_len = 3;
  double hard_illegible_prob = 0.30;
  // easy tier legibility mix for the guaranteed label
  double easy_label_full_prob = 0.80;
  double easy_label_partial_prob = 0.15;

  void validate() const;  // throws ConfigError
};

// The synthetic visual input. Everything downstream (prompt encoding, the
// oracle, the judge) reads only this structure.
struct Scene {
  std::uint64_t seed = 0;
  int grid_w = 8, grid_h = 8;
  Lighting lighting = Lighting::bright;
  DifficultyTier tier = DifficultyTier::easy;
  std::vector<SceneObject> objects;
};

// --- Observability -------------------------------------------------------
//
// All questions and claims are scoped to what a viewer could actually see:
// hidden objects contribute nothing beyond "something is there", partial
// occlusion hides material and text, and dim lighting hides color and
// material everywhere. This is what makes hallucination a decidable
// predicate.

bool observable(const SceneObject& o);  // occlusion != hidden
bool color_observable(const Scene& s, const SceneObject& o);
bool material_observable(const Scene& s, const SceneObject& o);
// Legible characters in order; empty if nothing is readable.
std::string readable_text(const Scene& s, const SceneObject& o);

struct QuestionTarget {
  std::optional<Category> category;
  std::optional<Category> category_b;  // spatial_relation rhs
  std::optional<Color> color;          // count filter / false-premise qualifier
  std::optional<AttrKind> attr;        // attribute asked (color_attr, material_attr, false_premise)
  std::optional<PropKind> prop;        // unanswerable_property
};

struct Question {
  QuestionKind kind{};
  DifficultyTier tier = DifficultyTier::easy;
  QuestionTarget target;
  TokenSeq tokens;
};

// --- Claim grammar --------------------------------------------------------
//
// CLAIM := exists cat | absent cat | count [color] cat (digit|unk)
//        | attr [color] cat (color|material|size) value
//        | rel cat relation cat | text cat (chars..|unk)
//        | prop cat propkind (digit|unk) | no_such [color] cat
// Claims are joined by "and"; a response ends at <eos>. Value slot unk is a
// targeted abstention ("can't tell"), never a factual assertion.

enum class ClaimKind : std::uint8_t { exists, absent, count, attr, rel, text, prop, no_such };

struct Claim {
  ClaimKind kind{};
  Category category{};
  Category category_b{};         // rel rhs
  std::optional<Color> qualifier;  // count filter / attr / no_such qualifier
  AttrKind attr_kind{};          // attr
  PropKind prop_kind{};          // prop
  Relation relation{};           // rel
  TokenId value = -1;            // attr/count/prop value token (tok().unk = abstain)
  std::vector<TokenId> text;     // text chars, or {unk}

  bool is_abstain() const;
};

bool operator==(const Claim& a, const Claim& b);

struct ParseResult {
  std::vector<Claim> claims;
  bool trailing_unparseable = false;
};

ParseResult parse_claims(const TokenSeq& response);
TokenSeq claim_tokens(const Claim& c);
// Renders claims joined by "and" with a trailing <eos>.
TokenSeq render_response(const std::vector<Claim>& claims);
std::string claim_to_string(const Claim& c);

// Per-claim oracle verdict.
struct ClaimCheck {
  bool invalid = false;
  bool abstain = false;
  bool abstain_warranted = false;  // abstention was the grounded move
  std::string reason;              // set when invalid
};
ClaimCheck check_claim(const Scene& s, const Claim& c);

struct AnswerSpec {
  TokenSeq canonical;              // canonical short answer incl. <eos>
  std::vector<Claim> acceptable;   // claims that satisfy the question
  bool requires_abstention = false;
  bool requires_rejection = false;
};

struct InvalidClaim {
  std::string claim;
  std::string reason;
};

struct GroundingVerdict {
  bool grounded = false;
  int validated_claims = 0;
  std::vector<InvalidClaim> invalid_claims;
  bool abstained = false;
  bool premise_rejected = false;
};

// --- Operations -----------------------------------------------------------

Scene generate_scene(std::uint64_t seed, DifficultyTier tier, const WorldConfig& config = {});
Question generate_question(const Scene& scene, QuestionKind kind, std::uint64_t seed);
// Direct question construction from an explicit target; used by augmentation
// to pose targeted harder questions.
Question make_question(QuestionKind kind, const QuestionTarget& target, DifficultyTier tier);
// Compositional count ("how many <color> <category>"), used by augmentation.
Question make_filtered_count_question(const Scene& scene, Color color, Category category);
AnswerSpec grounded_answers(const Scene& scene, const Question& question);
GroundingVerdict judge_response(const Scene& scene, const Question& question, const TokenSeq& response);

// Reward used for GRPO groups: +1 grounded, 0 harmless-but-incomplete,
// -1 any invalidated claim.
double oracle_reward(const GroundingVerdict& v);

// Perceptually confusable partner (cup<->bowl, dog<->cat, ...).
Category sibling_category(Category c);

// enum <-> string, used by serialization and reports
std::string to_string(Category c);
std::string to_string(Color c);
std::string to_string(ObjSize s);
std::string to_string(Material m);
std::string to_string(Lighting l);
std::string to_string(Occlusion o);
std::string to_string(DifficultyTier t);
std::string to_string(QuestionKind k);
std::string to_string(Relation r);
std::string to_string(AttrKind a);
std::string to_string(PropKind p);
Category category_from_string(const std::string& s);
Color color_from_string(const std::string& s);
ObjSize objsize_from_string(const std::string& s);
Material material_from_string(const std::string& s);
Lighting lighting_from_string(const std::string& s);
Occlusion occlusion_from_string(const std::string& s);
DifficultyTier tier_from_string(const std::string& s);
QuestionKind question_kind_from_string(const std::string& s);
Relation relation_from_string(const std::string& s);
AttrKind attr_kind_from_string(const std::string& s);
PropKind prop_kind_from_string(const std::string& s);

}  // namespace groundloom::world
