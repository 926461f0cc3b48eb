#include "groundloom/world.hpp"

#include <algorithm>
#include <cstdlib>

#include "groundloom/rng.hpp"

namespace groundloom::world {

namespace {

TokenId category_token(Category c) { return tok().category[static_cast<int>(c)]; }
TokenId color_token(Color c) { return tok().color[static_cast<int>(c)]; }
TokenId size_token(ObjSize s) { return tok().size[static_cast<int>(s)]; }
TokenId relation_token(Relation r) { return tok().relation[static_cast<int>(r)]; }
TokenId digit_token(int d) { return tok().digit[d]; }
TokenId prop_token(PropKind p) { return tok().prop[static_cast<int>(p)]; }

TokenId material_token(Material m) {
  // Material::unknown has no surface token; it reads as unk everywhere.
  if (m == Material::unknown) return tok().unk;
  return tok().material[static_cast<int>(m)];
}

TokenId attr_kind_token(AttrKind a) {
  switch (a) {
    case AttrKind::color: return tok().kw_color;
    case AttrKind::material: return tok().kw_material;
    case AttrKind::size: return tok().kw_size;
  }
  return tok().unk;
}

template <typename Enum, std::size_t N>
std::optional<Enum> enum_from_token(const std::array<TokenId, N>& table, TokenId id) {
  for (std::size_t i = 0; i < N; ++i)
    if (table[i] == id) return static_cast<Enum>(i);
  return std::nullopt;
}

TokenId ocr_token(char ch) {
  const std::string& a = ocr_alphabet();
  const auto p = a.find(ch);
  if (p == std::string::npos) throw ArgumentError("character outside OCR alphabet");
  return tok().ocr[p];
}

std::vector<const SceneObject*> observable_objects(const Scene& s) {
  std::vector<const SceneObject*> out;
  for (const auto& o : s.objects)
    if (observable(o)) out.push_back(&o);
  return out;
}

std::vector<const SceneObject*> observable_of(const Scene& s, Category cat) {
  std::vector<const SceneObject*> out;
  for (const auto& o : s.objects)
    if (observable(o) && o.category == cat) out.push_back(&o);
  return out;
}

bool relation_holds(Relation r, const SceneObject& a, const SceneObject& b) {
  switch (r) {
    case Relation::left_of: return a.col < b.col;
    case Relation::right_of: return a.col > b.col;
    case Relation::above: return a.row < b.row;
    case Relation::below: return a.row > b.row;
  }
  return false;
}

}  // namespace

bool observable(const SceneObject& o) { return o.occlusion != Occlusion::hidden; }

bool color_observable(const Scene& s, const SceneObject& o) {
  return o.occlusion == Occlusion::visible && s.lighting == Lighting::bright;
}

bool material_observable(const Scene& s, const SceneObject& o) {
  return o.occlusion == Occlusion::visible && s.lighting == Lighting::bright &&
         o.material != Material::unknown;
}

std::string readable_text(const Scene& s, const SceneObject& o) {
  (void)s;
  if (!o.label || o.occlusion != Occlusion::visible) return {};
  std::string out;
  for (std::size_t i = 0; i < o.label->text.size(); ++i)
    if (o.label->legible_mask & (1u << i)) out.push_back(o.label->text[i]);
  return out;
}

void WorldConfig::validate() const {
  if (grid_w < 4 || grid_h < 4) throw ConfigError("grid must be at least 4x4");
  if (grid_w > kMaxGrid || grid_h > kMaxGrid)
    throw ConfigError("grid exceeds position vocabulary (max 12)");
  if (easy_min_objects < 1 || easy_min_objects > easy_max_objects ||
      hard_min_objects < 1 || hard_min_objects > hard_max_objects)
    throw ConfigError("object count bounds invalid");
  if (easy_max_objects > 9 || hard_max_objects > 9)
    throw ConfigError("object count exceeds single-digit answers");
  if (easy_max_objects > grid_w * grid_h || hard_max_objects > grid_w * grid_h)
    throw ConfigError("object count exceeds grid capacity");
  if (min_label_len < 1 || min_label_len > max_label_len || max_label_len > 3)
    throw ConfigError("label length bounds invalid");
  if (max_labeled < 1) throw ConfigError("max_labeled must be positive");
}

Category sibling_category(Category c) {
  return static_cast<Category>(static_cast<int>(c) ^ 1);
}

// ---------------------------------------------------------------------------
// Scene generation
// ---------------------------------------------------------------------------

Scene generate_scene(std::uint64_t seed, DifficultyTier tier, const WorldConfig& config) {
  config.validate();
  const bool hard = tier == DifficultyTier::hard;
  Rng rng(mix_seed(seed, 0x5CE4E000ULL + (hard ? 1 : 0)));

  Scene s;
  s.seed = seed;
  s.grid_w = config.grid_w;
  s.grid_h = config.grid_h;
  s.tier = tier;
  s.lighting = (hard && rng.bernoulli(config.hard_dim_prob)) ? Lighting::dim : Lighting::bright;

  const int n = hard ? rng.uniform_int(config.hard_min_objects, config.hard_max_objects)
                     : rng.uniform_int(config.easy_min_objects, config.easy_max_objects);

  std::vector<bool> occupied(static_cast<std::size_t>(config.grid_w * config.grid_h), false);
  for (int i = 0; i < n; ++i) {
    SceneObject o;
    o.id = i;
    int col, row;
    do {
      col = rng.uniform_int(0, config.grid_w - 1);
      row = rng.uniform_int(0, config.grid_h - 1);
    } while (occupied[static_cast<std::size_t>(row * config.grid_w + col)]);
    occupied[static_cast<std::size_t>(row * config.grid_w + col)] = true;
    o.col = col;
    o.row = row;
    o.category = static_cast<Category>(rng.uniform_int(0, kNumCategories - 1));
    o.color = static_cast<Color>(rng.uniform_int(0, kNumColors - 1));
    o.size = static_cast<ObjSize>(rng.uniform_int(0, kNumSizes - 1));
    o.material = static_cast<Material>(rng.uniform_int(0, 5));
    if (hard) {
      const double u = rng.uniform();
      if (u < config.hard_partial_prob)
        o.occlusion = Occlusion::partial;
      else if (u < config.hard_partial_prob + config.hard_hidden_prob)
        o.occlusion = Occlusion::hidden;
      else
        o.occlusion = Occlusion::visible;
    }
    s.objects.push_back(o);
  }

  // Guarantee a minimally usable view: at least two non-hidden objects (when
  // the scene has two) and at least one fully visible one.
  auto count_if = [&](auto pred) {
    return static_cast<int>(std::count_if(s.objects.begin(), s.objects.end(), pred));
  };
  for (auto& o : s.objects) {
    if (count_if([](const SceneObject& x) { return x.occlusion != Occlusion::hidden; }) >=
        std::min<int>(2, n))
      break;
    if (o.occlusion == Occlusion::hidden) o.occlusion = Occlusion::partial;
  }
  if (count_if([](const SceneObject& x) { return x.occlusion == Occlusion::visible; }) == 0)
    for (auto& o : s.objects)
      if (o.occlusion != Occlusion::hidden) {
        o.occlusion = Occlusion::visible;
        break;
      }

  // Labels. Easy scenes always carry one label on object 0 so OCR questions
  // stay realizable; its legibility mix seeds abstention training.
  auto make_label = [&](double illegible_prob) {
    TextLabel lab;
    const int len = rng.uniform_int(config.min_label_len, config.max_label_len);
    for (int c = 0; c < len; ++c) {
      lab.text.push_back(ocr_alphabet()[static_cast<std::size_t>(rng.uniform_int(0, kOcrAlphabet - 1))]);
      if (!rng.bernoulli(illegible_prob)) lab.legible_mask |= (1u << c);
    }
    return lab;
  };

  int labeled = 0;
  if (!hard && !s.objects.empty()) {
    TextLabel lab = make_label(0.0);
    const double u = rng.uniform();
    if (u >= config.easy_label_full_prob) {
      if (u < config.easy_label_full_prob + config.easy_label_partial_prob) {
        lab.legible_mask = 0;
        for (std::size_t c = 0; c < lab.text.size(); ++c)
          if (rng.bernoulli(0.5)) lab.legible_mask |= (1u << c);
      } else {
        lab.legible_mask = 0;
      }
    }
    s.objects[0].label = lab;
    ++labeled;
  }
  for (std::size_t i = hard ? 0 : 1; i < s.objects.size() && labeled < config.max_labeled; ++i) {
    const double p = hard ? config.hard_label_prob : config.extra_label_prob;
    if (rng.bernoulli(p)) {
      s.objects[i].label = make_label(hard ? config.hard_illegible_prob : 0.0);
      ++labeled;
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Claim grammar
// ---------------------------------------------------------------------------

bool Claim::is_abstain() const {
  switch (kind) {
    case ClaimKind::count:
    case ClaimKind::attr:
    case ClaimKind::prop:
      return value == tok().unk;
    case ClaimKind::text:
      return text.size() == 1 && text[0] == tok().unk;
    default:
      return false;
  }
}

bool operator==(const Claim& a, const Claim& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case ClaimKind::exists:
    case ClaimKind::absent:
      return a.category == b.category;
    case ClaimKind::count:
      return a.category == b.category && a.qualifier == b.qualifier && a.value == b.value;
    case ClaimKind::attr:
      return a.category == b.category && a.qualifier == b.qualifier &&
             a.attr_kind == b.attr_kind && a.value == b.value;
    case ClaimKind::rel:
      return a.category == b.category && a.category_b == b.category_b && a.relation == b.relation;
    case ClaimKind::text:
      return a.category == b.category && a.text == b.text;
    case ClaimKind::prop:
      return a.category == b.category && a.prop_kind == b.prop_kind && a.value == b.value;
    case ClaimKind::no_such:
      return a.category == b.category && a.qualifier == b.qualifier;
  }
  return false;
}

TokenSeq claim_tokens(const Claim& c) {
  TokenSeq out;
  switch (c.kind) {
    case ClaimKind::exists:
      out = {tok().c_exists, category_token(c.category)};
      break;
    case ClaimKind::absent:
      out = {tok().c_absent, category_token(c.category)};
      break;
    case ClaimKind::count:
      out.push_back(tok().c_count);
      if (c.qualifier) out.push_back(color_token(*c.qualifier));
      out.push_back(category_token(c.category));
      out.push_back(c.value);
      break;
    case ClaimKind::attr:
      out.push_back(tok().c_attr);
      if (c.qualifier) out.push_back(color_token(*c.qualifier));
      out.push_back(category_token(c.category));
      out.push_back(attr_kind_token(c.attr_kind));
      out.push_back(c.value);
      break;
    case ClaimKind::rel:
      out = {tok().c_rel, category_token(c.category), relation_token(c.relation),
             category_token(c.category_b)};
      break;
    case ClaimKind::text:
      out.push_back(tok().c_text);
      out.push_back(category_token(c.category));
      out.insert(out.end(), c.text.begin(), c.text.end());
      break;
    case ClaimKind::prop:
      out = {tok().c_prop, category_token(c.category), prop_token(c.prop_kind), c.value};
      break;
    case ClaimKind::no_such:
      out.push_back(tok().c_no_such);
      if (c.qualifier) out.push_back(color_token(*c.qualifier));
      out.push_back(category_token(c.category));
      break;
  }
  return out;
}

TokenSeq render_response(const std::vector<Claim>& claims) {
  TokenSeq out;
  for (std::size_t i = 0; i < claims.size(); ++i) {
    if (i > 0) out.push_back(tok().conj);
    const TokenSeq ct = claim_tokens(claims[i]);
    out.insert(out.end(), ct.begin(), ct.end());
  }
  out.push_back(tok().eos);
  return out;
}

std::string claim_to_string(const Claim& c) {
  const TokenSeq ts = claim_tokens(c);
  std::string out;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (i > 0) out.push_back(' ');
    out += Vocab::get().text(ts[i]);
  }
  return out;
}

ParseResult parse_claims(const TokenSeq& response) {
  ParseResult res;
  const TokenIds& T = tok();
  std::size_t i = 0;
  const std::size_t n = response.size();

  auto at_end = [&] { return i >= n || response[i] == T.eos; };
  auto fail = [&res]() -> bool {
    res.trailing_unparseable = true;
    return false;
  };

  auto take_category = [&](Category& out) -> bool {
    if (i >= n) return false;
    auto c = enum_from_token<Category>(T.category, response[i]);
    if (!c) return false;
    out = *c;
    ++i;
    return true;
  };
  auto take_optional_color = [&](std::optional<Color>& out) {
    if (i < n) {
      auto c = enum_from_token<Color>(T.color, response[i]);
      if (c) {
        out = *c;
        ++i;
      }
    }
  };
  auto take_value = [&](TokenId& out, auto pred) -> bool {
    if (i >= n) return false;
    if (response[i] == T.unk || pred(response[i])) {
      out = response[i];
      ++i;
      return true;
    }
    return false;
  };

  // One claim per iteration; "and" joins; <eos> or end stops cleanly.
  while (!at_end()) {
    Claim c;
    const TokenId head = response[i++];
    if (head == T.c_exists || head == T.c_absent) {
      c.kind = head == T.c_exists ? ClaimKind::exists : ClaimKind::absent;
      if (!take_category(c.category)) {
        fail();
        break;
      }
    } else if (head == T.c_count) {
      c.kind = ClaimKind::count;
      take_optional_color(c.qualifier);
      if (!take_category(c.category) || !take_value(c.value, is_digit_token)) {
        fail();
        break;
      }
    } else if (head == T.c_attr) {
      c.kind = ClaimKind::attr;
      take_optional_color(c.qualifier);
      if (!take_category(c.category)) {
        fail();
        break;
      }
      if (i >= n) {
        fail();
        break;
      }
      const TokenId k = response[i++];
      bool ok = true;
      if (k == T.kw_color) {
        c.attr_kind = AttrKind::color;
        ok = take_value(c.value, is_color_token);
      } else if (k == T.kw_material) {
        c.attr_kind = AttrKind::material;
        ok = take_value(c.value, is_material_token);
      } else if (k == T.kw_size) {
        c.attr_kind = AttrKind::size;
        ok = take_value(c.value, is_size_token);
      } else {
        ok = false;
      }
      if (!ok) {
        fail();
        break;
      }
    } else if (head == T.c_rel) {
      c.kind = ClaimKind::rel;
      if (!take_category(c.category) || i >= n) {
        fail();
        break;
      }
      auto r = enum_from_token<Relation>(T.relation, response[i]);
      if (!r) {
        fail();
        break;
      }
      c.relation = *r;
      ++i;
      if (!take_category(c.category_b)) {
        fail();
        break;
      }
    } else if (head == T.c_text) {
      c.kind = ClaimKind::text;
      if (!take_category(c.category)) {
        fail();
        break;
      }
      if (i < n && response[i] == T.unk) {
        c.text = {T.unk};
        ++i;
      } else {
        while (i < n && is_ocr_token(response[i])) c.text.push_back(response[i++]);
        if (c.text.empty()) {
          fail();
          break;
        }
      }
    } else if (head == T.c_prop) {
      c.kind = ClaimKind::prop;
      if (!take_category(c.category) || i >= n) {
        fail();
        break;
      }
      auto p = enum_from_token<PropKind>(T.prop, response[i]);
      if (!p) {
        fail();
        break;
      }
      c.prop_kind = *p;
      ++i;
      if (!take_value(c.value, is_digit_token)) {
        fail();
        break;
      }
    } else if (head == T.c_no_such) {
      c.kind = ClaimKind::no_such;
      take_optional_color(c.qualifier);
      if (!take_category(c.category)) {
        fail();
        break;
      }
    } else {
      fail();
      break;
    }

    res.claims.push_back(std::move(c));

    if (at_end()) break;
    if (response[i] == T.conj) {
      ++i;
      if (at_end()) {  // dangling connective
        fail();
        break;
      }
    } else {
      fail();
      break;
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Oracle
// ---------------------------------------------------------------------------

ClaimCheck check_claim(const Scene& s, const Claim& c) {
  ClaimCheck out;
  const TokenIds& T = tok();

  auto candidates = [&](Category cat, const std::optional<Color>& qual) {
    std::vector<const SceneObject*> list;
    for (const auto& o : s.objects) {
      if (!observable(o) || o.category != cat) continue;
      if (qual && (!color_observable(s, o) || o.color != *qual)) continue;
      list.push_back(&o);
    }
    return list;
  };

  switch (c.kind) {
    case ClaimKind::exists: {
      if (candidates(c.category, std::nullopt).empty()) {
        out.invalid = true;
        out.reason = "nonexistent object";
      }
      return out;
    }
    case ClaimKind::absent: {
      if (!candidates(c.category, std::nullopt).empty()) {
        out.invalid = true;
        out.reason = "object visibly present";
      }
      return out;
    }
    case ClaimKind::count: {
      if (c.value == T.unk) {
        out.abstain = true;
        out.abstain_warranted = false;  // visible counts are always knowable
        return out;
      }
      const int claimed = static_cast<int>(c.value - T.digit[0]);
      const int actual = static_cast<int>(candidates(c.category, c.qualifier).size());
      if (claimed != actual) {
        out.invalid = true;
        out.reason = "wrong count";
      }
      return out;
    }
    case ClaimKind::attr: {
      const auto cand = candidates(c.category, c.qualifier);
      auto attr_observable = [&](const SceneObject& o) {
        switch (c.attr_kind) {
          case AttrKind::color: return color_observable(s, o);
          case AttrKind::material: return material_observable(s, o);
          case AttrKind::size: return true;
        }
        return false;
      };
      if (c.value == T.unk) {
        out.abstain = true;
        out.abstain_warranted =
            !cand.empty() && std::none_of(cand.begin(), cand.end(),
                                          [&](const SceneObject* o) { return attr_observable(*o); });
        return out;
      }
      if (cand.empty()) {
        out.invalid = true;
        out.reason = "nonexistent object";
        return out;
      }
      auto matches = [&](const SceneObject& o) {
        if (!attr_observable(o)) return false;
        switch (c.attr_kind) {
          case AttrKind::color: return color_token(o.color) == c.value;
          case AttrKind::material: return material_token(o.material) == c.value;
          case AttrKind::size: return size_token(o.size) == c.value;
        }
        return false;
      };
      if (std::none_of(cand.begin(), cand.end(),
                       [&](const SceneObject* o) { return matches(*o); })) {
        out.invalid = true;
        out.reason = "unsupported attribute";
      }
      return out;
    }
    case ClaimKind::rel: {
      const auto lhs = candidates(c.category, std::nullopt);
      const auto rhs = candidates(c.category_b, std::nullopt);
      if (lhs.empty() || rhs.empty()) {
        out.invalid = true;
        out.reason = "nonexistent object";
        return out;
      }
      for (const auto* a : lhs)
        for (const auto* b : rhs)
          if (a->id != b->id && relation_holds(c.relation, *a, *b)) return out;
      out.invalid = true;
      out.reason = "unsupported relation";
      return out;
    }
    case ClaimKind::text: {
      std::vector<std::string> readings;
      bool any_labeled = false;
      for (const auto& o : s.objects) {
        if (o.category != c.category || !o.label || o.occlusion != Occlusion::visible) continue;
        any_labeled = true;
        std::string r = readable_text(s, o);
        if (!r.empty()) readings.push_back(std::move(r));
      }
      if (c.text.size() == 1 && c.text[0] == T.unk) {
        out.abstain = true;
        out.abstain_warranted = readings.empty();
        return out;
      }
      std::string claimed;
      for (TokenId t : c.text) claimed += Vocab::get().text(t);
      if (std::find(readings.begin(), readings.end(), claimed) == readings.end()) {
        out.invalid = true;
        out.reason = any_labeled ? "fabricated text" : "nonexistent text";
      }
      return out;
    }
    case ClaimKind::prop: {
      if (c.value == T.unk) {
        out.abstain = true;
        out.abstain_warranted = true;  // the world never renders these
        return out;
      }
      out.invalid = true;
      out.reason = "unverifiable property";
      return out;
    }
    case ClaimKind::no_such: {
      if (!candidates(c.category, c.qualifier).empty()) {
        out.invalid = true;
        out.reason = "false rejection";
      }
      return out;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Question generation
// ---------------------------------------------------------------------------

namespace {

TokenSeq question_tokens(const Question& q) {
  const TokenIds& T = tok();
  TokenSeq out;
  switch (q.kind) {
    case QuestionKind::existence:
      out = {T.q_exists, category_token(*q.target.category)};
      break;
    case QuestionKind::count:
      out.push_back(T.q_count);
      if (q.target.color) out.push_back(color_token(*q.target.color));
      out.push_back(category_token(*q.target.category));
      break;
    case QuestionKind::color_attr:
      out = {T.q_color, category_token(*q.target.category)};
      break;
    case QuestionKind::material_attr:
      out = {T.q_material, category_token(*q.target.category)};
      break;
    case QuestionKind::spatial_relation:
      out = {T.q_rel, category_token(*q.target.category), category_token(*q.target.category_b)};
      break;
    case QuestionKind::ocr_read:
      out = {T.q_text, category_token(*q.target.category)};
      break;
    case QuestionKind::false_premise:
      out.push_back(T.q_fp);
      out.push_back(attr_kind_token(*q.target.attr));
      if (q.target.color) out.push_back(color_token(*q.target.color));
      out.push_back(category_token(*q.target.category));
      break;
    case QuestionKind::unanswerable_property:
      out = {T.q_prop, prop_token(*q.target.prop), category_token(*q.target.category)};
      break;
  }
  return out;
}

std::vector<Category> observable_categories(const Scene& s) {
  std::vector<Category> cats;
  for (int c = 0; c < kNumCategories; ++c)
    if (!observable_of(s, static_cast<Category>(c)).empty())
      cats.push_back(static_cast<Category>(c));
  return cats;
}

std::vector<Category> absent_categories(const Scene& s) {
  std::vector<Category> cats;
  for (int c = 0; c < kNumCategories; ++c)
    if (observable_of(s, static_cast<Category>(c)).empty())
      cats.push_back(static_cast<Category>(c));
  return cats;
}

// One generation attempt; nullopt means retry with the next derived seed.
std::optional<Question> try_question(const Scene& s, QuestionKind kind, Rng& rng) {
  Question q;
  q.kind = kind;
  q.tier = s.tier;
  const auto present = observable_categories(s);
  const auto absent = absent_categories(s);

  switch (kind) {
    case QuestionKind::existence: {
      if (!present.empty() && (absent.empty() || rng.bernoulli(0.6)))
        q.target.category = rng.pick(present);
      else if (!absent.empty())
        q.target.category = rng.pick(absent);
      else
        return std::nullopt;
      break;
    }
    case QuestionKind::count: {
      if (!present.empty() && rng.bernoulli(0.7))
        q.target.category = rng.pick(present);
      else
        q.target.category = static_cast<Category>(rng.uniform_int(0, kNumCategories - 1));
      break;
    }
    case QuestionKind::color_attr:
    case QuestionKind::material_attr: {
      if (present.empty()) return std::nullopt;
      std::vector<Category> unique;
      for (Category c : present)
        if (observable_of(s, c).size() == 1) unique.push_back(c);
      if (!unique.empty() && rng.bernoulli(0.8))
        q.target.category = rng.pick(unique);
      else
        q.target.category = rng.pick(present);
      q.target.attr = kind == QuestionKind::color_attr ? AttrKind::color : AttrKind::material;
      break;
    }
    case QuestionKind::spatial_relation: {
      const auto objs = observable_objects(s);
      if (objs.size() < 2) return std::nullopt;
      std::vector<std::pair<const SceneObject*, const SceneObject*>> pairs;
      for (const auto* a : objs)
        for (const auto* b : objs)
          if (a->id != b->id && a->category != b->category) pairs.emplace_back(a, b);
      if (pairs.empty()) return std::nullopt;
      const auto& pr = pairs[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<int>(pairs.size()) - 1))];
      q.target.category = pr.first->category;
      q.target.category_b = pr.second->category;
      break;
    }
    case QuestionKind::ocr_read: {
      std::vector<Category> labeled;
      for (const auto& o : s.objects)
        if (o.label && o.occlusion == Occlusion::visible &&
            std::find(labeled.begin(), labeled.end(), o.category) == labeled.end())
          labeled.push_back(o.category);
      if (labeled.empty()) return std::nullopt;
      q.target.category = rng.pick(labeled);
      break;
    }
    case QuestionKind::false_premise: {
      const bool try_combo = rng.bernoulli(0.5) && !present.empty();
      if (try_combo) {
        const Category cat = rng.pick(present);
        std::vector<Color> seen;
        for (const auto* o : observable_of(s, cat))
          if (color_observable(s, *o)) seen.push_back(o->color);
        std::vector<Color> missing;
        for (int c = 0; c < kNumColors; ++c)
          if (std::find(seen.begin(), seen.end(), static_cast<Color>(c)) == seen.end())
            missing.push_back(static_cast<Color>(c));
        if (!missing.empty()) {
          q.target.category = cat;
          q.target.color = rng.pick(missing);
          q.target.attr = rng.bernoulli(0.5) ? AttrKind::material : AttrKind::size;
          break;
        }
      }
      if (absent.empty()) return std::nullopt;
      q.target.category = rng.pick(absent);
      q.target.attr = AttrKind::color;
      break;
    }
    case QuestionKind::unanswerable_property: {
      if (present.empty()) return std::nullopt;
      q.target.category = rng.pick(present);
      q.target.prop = static_cast<PropKind>(rng.uniform_int(0, kNumPropKinds - 1));
      break;
    }
  }
  q.tokens = question_tokens(q);
  return q;
}

}  // namespace

Question generate_question(const Scene& scene, QuestionKind kind, std::uint64_t seed) {
  if (scene.objects.empty()) throw ArgumentError("scene has no objects");
  for (std::uint64_t attempt = 0; attempt < 8; ++attempt) {
    Rng rng(mix_seed(seed, 0x9E57 + attempt * 131 + static_cast<std::uint64_t>(kind)));
    if (auto q = try_question(scene, kind, rng)) return *q;
  }
  throw UnrealizableError("question kind " + to_string(kind) + " unrealizable on this scene");
}

Question make_question(QuestionKind kind, const QuestionTarget& target, DifficultyTier tier) {
  Question q;
  q.kind = kind;
  q.tier = tier;
  q.target = target;
  q.tokens = question_tokens(q);
  return q;
}

Question make_filtered_count_question(const Scene& scene, Color color, Category category) {
  (void)scene;
  QuestionTarget t;
  t.category = category;
  t.color = color;
  return make_question(QuestionKind::count, t, DifficultyTier::hard);
}

// ---------------------------------------------------------------------------
// Grounded answer sets
// ---------------------------------------------------------------------------

AnswerSpec grounded_answers(const Scene& scene, const Question& q) {
  const TokenIds& T = tok();
  AnswerSpec spec;
  auto finish = [&](const Claim& canonical) {
    spec.canonical = render_response({canonical});
    return spec;
  };

  switch (q.kind) {
    case QuestionKind::existence: {
      Claim c;
      c.category = *q.target.category;
      c.kind = observable_of(scene, c.category).empty() ? ClaimKind::absent : ClaimKind::exists;
      spec.acceptable = {c};
      return finish(c);
    }
    case QuestionKind::count: {
      Claim c;
      c.kind = ClaimKind::count;
      c.category = *q.target.category;
      c.qualifier = q.target.color;
      int n = 0;
      for (const auto* o : observable_of(scene, c.category)) {
        if (c.qualifier && (!color_observable(scene, *o) || o->color != *c.qualifier)) continue;
        ++n;
      }
      c.value = T.digit[n];
      spec.acceptable = {c};
      return finish(c);
    }
    case QuestionKind::color_attr:
    case QuestionKind::material_attr: {
      const bool is_color = q.kind == QuestionKind::color_attr;
      Claim base;
      base.kind = ClaimKind::attr;
      base.category = *q.target.category;
      base.attr_kind = is_color ? AttrKind::color : AttrKind::material;
      std::vector<TokenId> values;
      for (const auto* o : observable_of(scene, base.category)) {
        if (is_color && color_observable(scene, *o)) values.push_back(color_token(o->color));
        if (!is_color && material_observable(scene, *o)) values.push_back(material_token(o->material));
      }
      if (values.empty()) {
        base.value = T.unk;
        spec.requires_abstention = true;
        spec.acceptable = {base};
        return finish(base);
      }
      base.value = values.front();  // lowest object id
      for (TokenId v : values) {
        Claim c = base;
        c.value = v;
        if (std::find(spec.acceptable.begin(), spec.acceptable.end(), c) == spec.acceptable.end())
          spec.acceptable.push_back(c);
      }
      return finish(base);
    }
    case QuestionKind::spatial_relation: {
      const auto lhs = observable_of(scene, *q.target.category);
      const auto rhs = observable_of(scene, *q.target.category_b);
      Claim base;
      base.kind = ClaimKind::rel;
      base.category = *q.target.category;
      base.category_b = *q.target.category_b;
      for (int r = 0; r < kNumRelations; ++r) {
        Claim c = base;
        c.relation = static_cast<Relation>(r);
        for (const auto* a : lhs)
          for (const auto* b : rhs)
            if (a->id != b->id && relation_holds(c.relation, *a, *b)) {
              if (std::find(spec.acceptable.begin(), spec.acceptable.end(), c) ==
                  spec.acceptable.end())
                spec.acceptable.push_back(c);
            }
      }
      // Canonical relation comes from the lowest-id valid pair, primary axis
      // first (ties go horizontal).
      const SceneObject* ca = nullptr;
      const SceneObject* cb = nullptr;
      for (const auto* a : lhs)
        for (const auto* b : rhs)
          if (a->id != b->id &&
              (!ca || std::make_pair(a->id, b->id) < std::make_pair(ca->id, cb->id))) {
            ca = a;
            cb = b;
          }
      if (!ca) throw ArgumentError("relation question does not match scene");
      const int dc = ca->col - cb->col;
      const int dr = ca->row - cb->row;
      if (std::abs(dc) >= std::abs(dr) && dc != 0)
        base.relation = dc < 0 ? Relation::left_of : Relation::right_of;
      else
        base.relation = dr < 0 ? Relation::above : Relation::below;
      return finish(base);
    }
    case QuestionKind::ocr_read: {
      Claim base;
      base.kind = ClaimKind::text;
      base.category = *q.target.category;
      std::vector<std::string> readings;
      for (const auto& o : scene.objects) {
        if (o.category != base.category || !o.label || o.occlusion != Occlusion::visible) continue;
        std::string r = readable_text(scene, o);
        if (!r.empty() && std::find(readings.begin(), readings.end(), r) == readings.end())
          readings.push_back(std::move(r));
      }
      if (readings.empty()) {
        base.text = {T.unk};
        spec.requires_abstention = true;
        spec.acceptable = {base};
        return finish(base);
      }
      for (const std::string& r : readings) {
        Claim c = base;
        for (char ch : r) c.text.push_back(ocr_token(ch));
        spec.acceptable.push_back(c);
      }
      base = spec.acceptable.front();
      return finish(base);
    }
    case QuestionKind::false_premise: {
      Claim c;
      c.kind = ClaimKind::no_such;
      c.category = *q.target.category;
      c.qualifier = q.target.color;
      spec.requires_rejection = true;
      spec.acceptable = {c};
      return finish(c);
    }
    case QuestionKind::unanswerable_property: {
      Claim c;
      c.kind = ClaimKind::prop;
      c.category = *q.target.category;
      c.prop_kind = *q.target.prop;
      c.value = T.unk;
      spec.requires_abstention = true;
      spec.acceptable = {c};
      return finish(c);
    }
  }
  throw ArgumentError("unhandled question kind");
}

GroundingVerdict judge_response(const Scene& scene, const Question& question,
                                const TokenSeq& response) {
  const AnswerSpec spec = grounded_answers(scene, question);
  const ParseResult parsed = parse_claims(response);

  GroundingVerdict v;
  if (parsed.trailing_unparseable) v.invalid_claims.push_back({"<unparseable>", "unparseable"});

  bool answered = false;
  for (const Claim& c : parsed.claims) {
    const ClaimCheck cc = check_claim(scene, c);
    if (cc.invalid) {
      v.invalid_claims.push_back({claim_to_string(c), cc.reason});
    } else if (cc.abstain) {
      v.abstained = true;
      if (cc.abstain_warranted) ++v.validated_claims;
    } else {
      ++v.validated_claims;
    }
    if (c.kind == ClaimKind::no_such && !cc.invalid && question.kind == QuestionKind::false_premise &&
        question.target.category && c.category == *question.target.category &&
        c.qualifier == question.target.color)
      v.premise_rejected = true;
    if (!answered)
      answered = std::find(spec.acceptable.begin(), spec.acceptable.end(), c) != spec.acceptable.end();
  }
  v.grounded = v.invalid_claims.empty() && answered;
  return v;
}

double oracle_reward(const GroundingVerdict& v) {
  if (v.grounded) return 1.0;
  if (v.invalid_claims.empty()) return 0.0;
  return -1.0;
}

// ---------------------------------------------------------------------------
// Enum names
// ---------------------------------------------------------------------------

namespace {
const char* kCategoryNames[] = {"cup", "bowl", "book", "box",  "dog",   "cat",
                                "car", "bus",  "lamp", "clock", "plant", "ball"};
const char* kColorNames[] = {"red", "blue", "green", "yellow", "black", "white", "orange", "purple"};
const char* kSizeNames[] = {"small", "medium", "large"};
const char* kMaterialNames[] = {"wood", "metal", "plastic", "glass", "fabric", "unknown"};
const char* kLightingNames[] = {"bright", "dim"};
const char* kOcclusionNames[] = {"visible", "partial", "hidden"};
const char* kTierNames[] = {"easy", "hard"};
const char* kKindNames[] = {"existence", "count", "color_attr", "material_attr",
                            "spatial_relation", "ocr_read", "false_premise",
                            "unanswerable_property"};
const char* kRelationNames[] = {"left_of", "right_of", "above", "below"};
const char* kAttrKindNames[] = {"color", "material", "size"};
const char* kPropKindNames[] = {"price", "pages", "weight", "brand", "age"};

template <typename Enum, std::size_t N>
Enum from_name(const char* const (&names)[N], const std::string& s, const char* what) {
  for (std::size_t i = 0; i < N; ++i)
    if (s == names[i]) return static_cast<Enum>(i);
  throw ArgumentError(std::string("unknown ") + what + ": " + s);
}
}  // namespace

std::string to_string(Category c) { return kCategoryNames[static_cast<int>(c)]; }
std::string to_string(Color c) { return kColorNames[static_cast<int>(c)]; }
std::string to_string(ObjSize s) { return kSizeNames[static_cast<int>(s)]; }
std::string to_string(Material m) { return kMaterialNames[static_cast<int>(m)]; }
std::string to_string(Lighting l) { return kLightingNames[static_cast<int>(l)]; }
std::string to_string(Occlusion o) { return kOcclusionNames[static_cast<int>(o)]; }
std::string to_string(DifficultyTier t) { return kTierNames[static_cast<int>(t)]; }
std::string to_string(QuestionKind k) { return kKindNames[static_cast<int>(k)]; }
std::string to_string(Relation r) { return kRelationNames[static_cast<int>(r)]; }
std::string to_string(AttrKind a) { return kAttrKindNames[static_cast<int>(a)]; }
std::string to_string(PropKind p) { return kPropKindNames[static_cast<int>(p)]; }

Category category_from_string(const std::string& s) { return from_name<Category>(kCategoryNames, s, "category"); }
Color color_from_string(const std::string& s) { return from_name<Color>(kColorNames, s, "color"); }
ObjSize objsize_from_string(const std::string& s) { return from_name<ObjSize>(kSizeNames, s, "size"); }
Material material_from_string(const std::string& s) { return from_name<Material>(kMaterialNames, s, "material"); }
Lighting lighting_from_string(const std::string& s) { return from_name<Lighting>(kLightingNames, s, "lighting"); }
Occlusion occlusion_from_string(const std::string& s) { return from_name<Occlusion>(kOcclusionNames, s, "occlusion"); }
DifficultyTier tier_from_string(const std::string& s) { return from_name<DifficultyTier>(kTierNames, s, "tier"); }
QuestionKind question_kind_from_string(const std::string& s) { return from_name<QuestionKind>(kKindNames, s, "question kind"); }
Relation relation_from_string(const std::string& s) { return from_name<Relation>(kRelationNames, s, "relation"); }
AttrKind attr_kind_from_string(const std::string& s) { return from_name<AttrKind>(kAttrKindNames, s, "attr kind"); }
PropKind prop_kind_from_string(const std::string& s) { return from_name<PropKind>(kPropKindNames, s, "prop kind"); }

}  // namespace groundloom::world
