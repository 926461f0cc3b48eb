#include "groundloom/forge.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "groundloom/rng.hpp"

namespace groundloom::forge {

using world::AttrKind;
using world::Category;
using world::Claim;
using world::ClaimKind;
using world::Color;
using world::DifficultyTier;
using world::Occlusion;
using world::Question;
using world::QuestionKind;
using world::Scene;
using world::SceneObject;

namespace {

const char* kTagNames[kNumPerturbationTags] = {
    "count_off_by_one",      "color_swap",     "material_swap",
    "relation_flip",         "category_sibling_swap", "nonexistent_object_insert",
    "fabricated_ocr",        "premise_compliance"};

std::vector<Category> visible_scope_absent(const Scene& s) {
  std::vector<Category> out;
  for (int c = 0; c < kNumCategories; ++c) {
    const auto cat = static_cast<Category>(c);
    bool present = false;
    for (const auto& o : s.objects)
      if (world::observable(o) && o.category == cat) present = true;
    if (!present) out.push_back(cat);
  }
  return out;
}

std::vector<Category> visible_scope_present(const Scene& s) {
  std::vector<Category> out;
  for (int c = 0; c < kNumCategories; ++c) {
    const auto cat = static_cast<Category>(c);
    for (const auto& o : s.objects)
      if (world::observable(o) && o.category == cat) {
        out.push_back(cat);
        break;
      }
  }
  return out;
}

bool claim_invalid(const Scene& s, const Claim& c) { return world::check_claim(s, c).invalid; }

}  // namespace

std::string to_string(PerturbationTag t) { return kTagNames[static_cast<int>(t)]; }

PerturbationTag perturbation_tag_from_string(const std::string& s) {
  for (int i = 0; i < kNumPerturbationTags; ++i)
    if (s == kTagNames[i]) return static_cast<PerturbationTag>(i);
  throw ArgumentError("unknown perturbation tag: " + s);
}

bool is_substitution_tag(PerturbationTag t) {
  switch (t) {
    case PerturbationTag::count_off_by_one:
    case PerturbationTag::color_swap:
    case PerturbationTag::material_swap:
    case PerturbationTag::relation_flip:
    case PerturbationTag::category_sibling_swap:
    case PerturbationTag::fabricated_ocr:
      return true;
    default:
      return false;
  }
}

int response_length(const TokenSeq& y) {
  if (!y.empty() && y.back() == tok().eos) return static_cast<int>(y.size()) - 1;
  return static_cast<int>(y.size());
}

// ---------------------------------------------------------------------------
// Stage 1
// ---------------------------------------------------------------------------

std::vector<SftSample> build_stage1(int n, std::uint64_t seed, const Stage1Config& config) {
  if (n < 1) throw ArgumentError("build_stage1: n must be >= 1");
  static const QuestionKind kinds[4] = {QuestionKind::existence, QuestionKind::count,
                                        QuestionKind::color_attr, QuestionKind::ocr_read};
  std::vector<SftSample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    SftSample s;
    s.tier = DifficultyTier::easy;
    s.scene = world::generate_scene(mix_seed(seed, 0x51ULL, static_cast<std::uint64_t>(i)),
                                    DifficultyTier::easy, config.world);
    Rng rng(mix_seed(seed, 0x52ULL, static_cast<std::uint64_t>(i)));
    const double u = rng.uniform();
    double acc = 0;
    QuestionKind kind = QuestionKind::existence;
    for (int k = 0; k < 4; ++k) {
      acc += config.kind_mix[static_cast<std::size_t>(k)];
      if (u < acc) {
        kind = kinds[k];
        break;
      }
    }
    try {
      s.question = world::generate_question(s.scene, kind,
                                            mix_seed(seed, 0x53ULL, static_cast<std::uint64_t>(i)));
    } catch (const UnrealizableError&) {
      // existence is always realizable on a nonempty easy scene
      s.question = world::generate_question(s.scene, QuestionKind::existence,
                                            mix_seed(seed, 0x54ULL, static_cast<std::uint64_t>(i)));
    }
    s.answer = world::grounded_answers(s.scene, s.question).canonical;
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

namespace {

// relation question under partial occlusion
std::optional<SftSample> augment_relation(const SftSample& in, Rng& rng) {
  Scene s = in.scene;
  s.tier = DifficultyTier::hard;
  for (auto& o : s.objects)
    if (rng.bernoulli(0.35)) o.occlusion = Occlusion::partial;
  if (s.objects.size() >= 3) {
    auto& o = s.objects[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<int>(s.objects.size()) - 1))];
    if (rng.bernoulli(0.3)) o.occlusion = Occlusion::hidden;
  }
  try {
    SftSample out;
    out.tier = DifficultyTier::hard;
    out.scene = s;
    out.question = world::generate_question(s, QuestionKind::spatial_relation, rng.next_u64());
    out.answer = world::grounded_answers(s, out.question).canonical;
    return out;
  } catch (const UnrealizableError&) {
    return std::nullopt;
  } catch (const ArgumentError&) {
    return std::nullopt;
  }
}

// compositional (attribute-filtered) count
std::optional<SftSample> augment_filtered_count(const SftSample& in, Rng& rng) {
  const Scene& s = in.scene;
  const auto present = visible_scope_present(s);
  if (present.empty()) return std::nullopt;
  const Category cat = rng.pick(present);
  std::vector<Color> observed;
  for (const auto& o : s.objects)
    if (world::observable(o) && o.category == cat && world::color_observable(s, o))
      observed.push_back(o.color);
  Color color;
  if (!observed.empty() && rng.bernoulli(0.7))
    color = rng.pick(observed);
  else
    color = static_cast<Color>(rng.uniform_int(0, kNumColors - 1));

  SftSample out;
  out.tier = DifficultyTier::hard;
  out.scene = s;
  out.scene.tier = DifficultyTier::hard;
  out.question = world::make_filtered_count_question(out.scene, color, cat);
  out.answer = world::grounded_answers(out.scene, out.question).canonical;
  return out;
}

// ambiguity-prone attribute: dim lighting, or the target demoted to partial
std::optional<SftSample> augment_ambiguous_attr(const SftSample& in, Rng& rng) {
  Scene s = in.scene;
  s.tier = DifficultyTier::hard;
  const auto present = visible_scope_present(s);
  if (present.empty()) return std::nullopt;
  const Category cat = rng.pick(present);
  const bool use_dim = rng.bernoulli(0.5);
  if (use_dim) {
    s.lighting = world::Lighting::dim;
  } else {
    for (auto& o : s.objects)
      if (o.category == cat && o.occlusion == Occlusion::visible) o.occlusion = Occlusion::partial;
  }
  world::QuestionTarget t;
  t.category = cat;
  const QuestionKind kind = rng.bernoulli(0.5) ? QuestionKind::color_attr
                                               : QuestionKind::material_attr;
  SftSample out;
  out.tier = DifficultyTier::hard;
  out.scene = s;
  out.question = world::make_question(kind, t, DifficultyTier::hard);
  out.answer = world::grounded_answers(s, out.question).canonical;
  return out;
}

}  // namespace

std::optional<SftSample> augment(const SftSample& sample, std::uint64_t seed) {
  if (sample.scene.objects.empty()) return std::nullopt;
  // One seeded family per call; unrealizable families signal a skip rather
  // than silently substituting an easier variant.
  Rng pickrng(mix_seed(seed, 0xA46ULL));
  const double u = pickrng.uniform();
  int family = 2;
  if (u < 0.30)
    family = 0;
  else if (u < 0.65)
    family = 1;

  for (int attempt = 0; attempt < 8; ++attempt) {
    Rng rng(mix_seed(seed, 0xA47ULL, static_cast<std::uint64_t>(attempt)));
    std::optional<SftSample> out;
    switch (family) {
      case 0: out = augment_relation(sample, rng); break;
      case 1: out = augment_filtered_count(sample, rng); break;
      default: out = augment_ambiguous_attr(sample, rng); break;
    }
    if (out) return out;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Negatives
// ---------------------------------------------------------------------------

namespace {

// Corrupts one claim into an oracle-rejected variant with the minimal edit.
std::optional<std::pair<Claim, PerturbationTag>> corrupt_claim(const Scene& s, const Claim& in,
                                                               Rng& rng) {
  const TokenIds& T = tok();
  switch (in.kind) {
    case ClaimKind::count: {
      if (in.value == T.unk) return std::nullopt;
      const int d = static_cast<int>(in.value - T.digit[0]);
      Claim c = in;
      c.value = T.digit[d < 9 ? d + 1 : d - 1];
      if (!claim_invalid(s, c)) c.value = T.digit[d > 0 ? d - 1 : d + 1];
      if (!claim_invalid(s, c)) return std::nullopt;
      return std::make_pair(c, PerturbationTag::count_off_by_one);
    }
    case ClaimKind::attr: {
      Claim c = in;
      if (in.attr_kind == AttrKind::color) {
        const int start = rng.uniform_int(0, kNumColors - 1);
        for (int i = 0; i < kNumColors; ++i) {
          c.value = T.color[(start + i) % kNumColors];
          if (c.value != in.value && claim_invalid(s, c))
            return std::make_pair(c, PerturbationTag::color_swap);
        }
        return std::nullopt;
      }
      if (in.attr_kind == AttrKind::material) {
        const int start = rng.uniform_int(0, kNumMaterialTokens - 1);
        for (int i = 0; i < kNumMaterialTokens; ++i) {
          c.value = T.material[(start + i) % kNumMaterialTokens];
          if (c.value != in.value && claim_invalid(s, c))
            return std::make_pair(c, PerturbationTag::material_swap);
        }
        return std::nullopt;
      }
      return std::nullopt;  // size swaps carry no dedicated tag
    }
    case ClaimKind::rel: {
      Claim c = in;
      auto flip = [](world::Relation r) {
        switch (r) {
          case world::Relation::left_of: return world::Relation::right_of;
          case world::Relation::right_of: return world::Relation::left_of;
          case world::Relation::above: return world::Relation::below;
          case world::Relation::below: return world::Relation::above;
        }
        return r;
      };
      c.relation = flip(in.relation);
      if (claim_invalid(s, c)) return std::make_pair(c, PerturbationTag::relation_flip);
      for (int r = 0; r < kNumRelations; ++r) {
        c.relation = static_cast<world::Relation>(r);
        if (c.relation != in.relation && claim_invalid(s, c))
          return std::make_pair(c, PerturbationTag::relation_flip);
      }
      // every relation holds somewhere: swap the rhs for an absent category
      const auto absent = visible_scope_absent(s);
      if (!absent.empty()) {
        c = in;
        c.category_b = absent[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<int>(absent.size()) - 1))];
        if (claim_invalid(s, c))
          return std::make_pair(c, PerturbationTag::category_sibling_swap);
      }
      return std::nullopt;
    }
    case ClaimKind::exists:
    case ClaimKind::absent: {
      Claim c = in;
      const Category sib = world::sibling_category(in.category);
      std::vector<Category> order{sib};
      const int start = rng.uniform_int(0, kNumCategories - 1);
      for (int i = 0; i < kNumCategories; ++i)
        order.push_back(static_cast<Category>((start + i) % kNumCategories));
      for (Category cat : order) {
        if (cat == in.category) continue;
        c.category = cat;
        if (claim_invalid(s, c)) return std::make_pair(c, PerturbationTag::category_sibling_swap);
      }
      return std::nullopt;
    }
    case ClaimKind::text: {
      Claim c = in;
      if (in.is_abstain()) {
        c.text.clear();
        const int len = rng.uniform_int(1, 2);
        for (int i = 0; i < len; ++i)
          c.text.push_back(T.ocr[rng.uniform_int(0, kOcrAlphabet - 1)]);
        if (claim_invalid(s, c)) return std::make_pair(c, PerturbationTag::fabricated_ocr);
        return std::nullopt;
      }
      for (int attempt = 0; attempt < 16; ++attempt) {
        c = in;
        if (rng.bernoulli(0.3) || c.text.empty()) {
          c.text.push_back(T.ocr[rng.uniform_int(0, kOcrAlphabet - 1)]);
        } else {
          const int pos = rng.uniform_int(0, static_cast<int>(c.text.size()) - 1);
          c.text[static_cast<std::size_t>(pos)] = T.ocr[rng.uniform_int(0, kOcrAlphabet - 1)];
        }
        if (!(c == in) && claim_invalid(s, c))
          return std::make_pair(c, PerturbationTag::fabricated_ocr);
      }
      return std::nullopt;
    }
    case ClaimKind::no_such: {
      // premise compliance: assert an attribute of the rejected object
      Claim c;
      c.kind = ClaimKind::attr;
      c.category = in.category;
      c.qualifier = in.qualifier;
      c.attr_kind = AttrKind::color;
      c.value = T.color[rng.uniform_int(0, kNumColors - 1)];
      if (in.qualifier) {
        c.attr_kind = AttrKind::material;
        c.value = T.material[rng.uniform_int(0, kNumMaterialTokens - 1)];
      }
      if (claim_invalid(s, c)) return std::make_pair(c, PerturbationTag::premise_compliance);
      return std::nullopt;
    }
    default:
      return std::nullopt;
  }
}

}  // namespace

std::pair<TokenSeq, PerturbationTag> perturb_negative(const Scene& scene, const Question& question,
                                                      const TokenSeq& y_plus, std::uint64_t seed) {
  const world::ParseResult parsed = world::parse_claims(y_plus);
  if (parsed.claims.empty() || parsed.trailing_unparseable)
    throw ArgumentError("perturb_negative: y_plus does not parse");
  if (question.kind == QuestionKind::unanswerable_property)
    throw ArgumentError("perturb_negative: no applicable tag for this question kind");

  Rng rng(mix_seed(seed, 0xBAD1ULL));
  std::vector<Claim> claims = parsed.claims;

  // Occasionally append a fabricated existence claim instead of touching the
  // answer; the common path corrupts one claim in place.
  const bool try_insert =
      question.kind != QuestionKind::false_premise && rng.bernoulli(0.15);
  if (try_insert) {
    const auto absent = visible_scope_absent(scene);
    if (!absent.empty()) {
      Claim extra;
      extra.kind = ClaimKind::exists;
      extra.category = absent[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<int>(absent.size()) - 1))];
      claims.push_back(extra);
      const TokenSeq y_minus = world::render_response(claims);
      if (!world::judge_response(scene, question, y_minus).grounded)
        return {y_minus, PerturbationTag::nonexistent_object_insert};
      claims.pop_back();
    }
  }

  // Target the answer claim, or sometimes an eligible detail claim.
  std::vector<std::size_t> targets{0};
  for (std::size_t i = 1; i < claims.size(); ++i) {
    const Claim& c = claims[i];
    const bool eligible =
        c.kind == ClaimKind::rel ||
        (c.kind == ClaimKind::attr &&
         (c.attr_kind == AttrKind::color || c.attr_kind == AttrKind::material));
    if (eligible) targets.push_back(i);
  }
  std::size_t pick = 0;
  if (targets.size() > 1 && rng.bernoulli(0.25))
    pick = targets[static_cast<std::size_t>(
        rng.uniform_int(1, static_cast<int>(targets.size()) - 1))];

  for (int attempt = 0; attempt < 8; ++attempt) {
    const std::size_t idx = attempt == 0 ? pick : 0;
    auto corrupted = corrupt_claim(scene, claims[idx], rng);
    if (!corrupted) continue;
    std::vector<Claim> mutated = claims;
    mutated[idx] = corrupted->first;
    const TokenSeq y_minus = world::render_response(mutated);
    if (!world::judge_response(scene, question, y_minus).grounded)
      return {y_minus, corrupted->second};
  }

  // Last resort: fabricated existence claim.
  const auto absent = visible_scope_absent(scene);
  if (!absent.empty() && question.kind != QuestionKind::false_premise) {
    Claim extra;
    extra.kind = ClaimKind::exists;
    extra.category = absent.front();
    std::vector<Claim> mutated = claims;
    mutated.push_back(extra);
    const TokenSeq y_minus = world::render_response(mutated);
    if (!world::judge_response(scene, question, y_minus).grounded)
      return {y_minus, PerturbationTag::nonexistent_object_insert};
  }
  throw ArgumentError("perturb_negative: no applicable perturbation");
}

PreferencePairData make_false_premise_pair(const Scene& scene, std::uint64_t seed) {
  PreferencePairData out;
  out.scene = scene;
  out.question = world::generate_question(scene, QuestionKind::false_premise, mix_seed(seed, 1));
  out.y_plus = world::grounded_answers(scene, out.question).canonical;

  Rng rng(mix_seed(seed, 2));
  const world::ParseResult parsed = world::parse_claims(out.y_plus);
  auto corrupted = corrupt_claim(scene, parsed.claims.front(), rng);
  if (!corrupted) throw UnrealizableError("false premise pair: compliance not constructible");
  out.y_minus = world::render_response({corrupted->first});
  out.tag = PerturbationTag::premise_compliance;
  return out;
}

// ---------------------------------------------------------------------------
// Expansion
// ---------------------------------------------------------------------------

TokenSeq expand_response(const Scene& scene, const Question& question, const TokenSeq& y,
                         int rounds) {
  if (rounds <= 0) return y;
  const world::ParseResult parsed = world::parse_claims(y);
  if (parsed.trailing_unparseable) return y;
  std::vector<Claim> claims = parsed.claims;

  std::vector<Category> involved;
  if (question.target.category) involved.push_back(*question.target.category);
  if (question.target.category_b) involved.push_back(*question.target.category_b);

  std::vector<const SceneObject*> objs;
  for (const auto& o : scene.objects)
    if (world::observable(o) &&
        std::find(involved.begin(), involved.end(), o.category) != involved.end())
      objs.push_back(&o);

  auto slot_taken = [&](const Claim& cand) {
    for (const Claim& c : claims) {
      if (c == cand) return true;
      if (c.kind == ClaimKind::attr && cand.kind == ClaimKind::attr &&
          c.category == cand.category && c.attr_kind == cand.attr_kind &&
          c.qualifier == cand.qualifier)
        return true;
    }
    return false;
  };

  // Deterministic candidate order: per object (id ascending) color, size,
  // material, then its relations to other observable objects.
  std::vector<Claim> candidates;
  for (const auto* o : objs) {
    if (world::color_observable(scene, *o)) {
      Claim c;
      c.kind = ClaimKind::attr;
      c.category = o->category;
      c.attr_kind = AttrKind::color;
      c.value = tok().color[static_cast<int>(o->color)];
      candidates.push_back(c);
    }
    {
      Claim c;
      c.kind = ClaimKind::attr;
      c.category = o->category;
      c.attr_kind = AttrKind::size;
      c.value = tok().size[static_cast<int>(o->size)];
      candidates.push_back(c);
    }
    if (world::material_observable(scene, *o)) {
      Claim c;
      c.kind = ClaimKind::attr;
      c.category = o->category;
      c.attr_kind = AttrKind::material;
      c.value = tok().material[static_cast<int>(o->material)];
      candidates.push_back(c);
    }
    for (const auto& b : scene.objects) {
      if (!world::observable(b) || b.id == o->id || b.category == o->category) continue;
      Claim c;
      c.kind = ClaimKind::rel;
      c.category = o->category;
      c.category_b = b.category;
      const int dc = o->col - b.col;
      const int dr = o->row - b.row;
      if (std::abs(dc) >= std::abs(dr) && dc != 0)
        c.relation = dc < 0 ? world::Relation::left_of : world::Relation::right_of;
      else if (dr != 0)
        c.relation = dr < 0 ? world::Relation::above : world::Relation::below;
      else
        continue;
      candidates.push_back(c);
    }
  }

  int added = 0;
  for (const Claim& cand : candidates) {
    if (added >= rounds) break;
    if (slot_taken(cand)) continue;
    const world::ClaimCheck cc = world::check_claim(scene, cand);
    if (cc.invalid || cc.abstain) continue;
    claims.push_back(cand);
    ++added;
  }
  if (added == 0) return y;
  return world::render_response(claims);
}

// ---------------------------------------------------------------------------
// Tilting and resampling
// ---------------------------------------------------------------------------

namespace {

double capped_weighted_mean(const std::vector<int>& lengths, double mu, double beta, double cap) {
  double num = 0, den = 0;
  for (int l : lengths) {
    const double w = std::min(std::exp(beta * (static_cast<double>(l) - mu)), cap);
    num += w * static_cast<double>(l);
    den += w;
  }
  return num / den;
}

}  // namespace

double max_tilt_mean(const std::vector<int>& lengths, double cap) {
  if (lengths.empty()) throw ArgumentError("max_tilt_mean: no lengths");
  double mu = 0;
  for (int l : lengths) mu += l;
  mu /= static_cast<double>(lengths.size());
  return capped_weighted_mean(lengths, mu, 10.0, cap);
}

double solve_tilt_beta(const std::vector<int>& lengths, double target_mean, double cap) {
  if (lengths.empty()) throw ArgumentError("solve_tilt_beta: no lengths");
  double mu = 0;
  for (int l : lengths) mu += l;
  mu /= static_cast<double>(lengths.size());

  if (std::abs(target_mean - mu) <= 1e-12) return 0.0;
  if (target_mean < mu)
    throw InfeasibleTargetError("tilt target below source mean");
  // The capped-weighted mean is nondecreasing in beta, so bisection applies.
  const double reachable = capped_weighted_mean(lengths, mu, 10.0, cap);
  if (target_mean > reachable + 1e-9)
    throw InfeasibleTargetError("tilt target unreachable under cap");

  double lo = 0.0, hi = 10.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (capped_weighted_mean(lengths, mu, mid, cap) < target_mean)
      lo = mid;
    else
      hi = mid;
  }
  const double beta = 0.5 * (lo + hi);
  if (std::abs(capped_weighted_mean(lengths, mu, beta, cap) - target_mean) > 1e-6)
    throw InfeasibleTargetError("tilt bisection failed to meet target");
  return beta;
}

std::vector<double> tilt_weights(const std::vector<int>& lengths, const TiltConfig& cfg) {
  if (lengths.empty()) throw ArgumentError("tilt_weights: no lengths");
  if (cfg.cap < 1.0) throw ConfigError("tilt_weights: cap must be >= 1");
  double mu = 0;
  for (int l : lengths) mu += l;
  mu /= static_cast<double>(lengths.size());
  const double beta = cfg.target_mean ? solve_tilt_beta(lengths, *cfg.target_mean, cfg.cap)
                                      : cfg.beta;
  std::vector<double> out;
  out.reserve(lengths.size());
  for (int l : lengths)
    out.push_back(std::min(std::exp(beta * (static_cast<double>(l) - mu)), cfg.cap));
  return out;
}

std::vector<int> resample_indices(const std::vector<double>& weights, int m, std::uint64_t seed) {
  if (m < 1) throw ArgumentError("resample: m must be >= 1");
  double total = 0;
  for (double w : weights) {
    if (w < 0) throw ArgumentError("resample: negative weight");
    total += w;
  }
  if (total <= 0) throw ArgumentError("resample: nonpositive weight sum");

  std::vector<double> cum(weights.size());
  double acc = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    cum[i] = acc;
  }
  Rng rng(mix_seed(seed, 0x5A3FULL));
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) {
    const double u = rng.uniform() * total;
    const auto it = std::upper_bound(cum.begin(), cum.end(), u);
    out.push_back(static_cast<int>(std::min<std::ptrdiff_t>(
        it - cum.begin(), static_cast<std::ptrdiff_t>(weights.size()) - 1)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stage 2
// ---------------------------------------------------------------------------

std::vector<PreferencePairData> build_stage2(const std::vector<SftSample>& d1,
                                             const ForgeConfig& config, std::uint64_t seed,
                                             ForgeReport* report) {
  if (d1.empty()) throw ArgumentError("build_stage2: empty D1");
  if (config.ratio <= 0) throw ConfigError("build_stage2: ratio must be > 0");
  if (config.fp_fraction < 0 || config.fp_fraction >= 1)
    throw ConfigError("build_stage2: fp_fraction must be in [0,1)");

  const int n = static_cast<int>(d1.size());
  const int m = std::max(1, static_cast<int>(std::lround(config.ratio * n)));
  const int fp_target = static_cast<int>(std::lround(config.fp_fraction * m));
  const int hard_target = std::max(0, m - fp_target);

  ForgeReport rep;
  rep.d1_size = n;

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng order_rng(mix_seed(seed, 1));
  order_rng.shuffle(order);

  std::vector<PreferencePairData> pool;
  for (int idx : order) {
    if (static_cast<int>(pool.size()) >= hard_target) break;
    const SftSample& s = d1[static_cast<std::size_t>(idx)];
    auto harder = augment(s, mix_seed(seed, 2, static_cast<std::uint64_t>(idx)));
    if (!harder) {
      ++rep.drops_augment;
      continue;
    }
    const TokenSeq y_plus =
        expand_response(harder->scene, harder->question, harder->answer, config.expand_rounds);
    TokenSeq y_minus;
    PerturbationTag tag;
    try {
      std::tie(y_minus, tag) = perturb_negative(harder->scene, harder->question, y_plus,
                                                mix_seed(seed, 3, static_cast<std::uint64_t>(idx)));
    } catch (const ArgumentError&) {
      ++rep.drops_perturb;
      continue;
    }
    if (!world::judge_response(harder->scene, harder->question, y_plus).grounded ||
        world::judge_response(harder->scene, harder->question, y_minus).grounded) {
      ++rep.drops_soundness;
      continue;
    }
    PreferencePairData pair;
    pair.scene = harder->scene;
    pair.question = harder->question;
    pair.y_plus = y_plus;
    pair.y_minus = y_minus;
    pair.tag = tag;
    pair.origin_index = idx;
    pool.push_back(std::move(pair));
  }

  // Keep the configured false-premise share exact even when the hard pool
  // came up short.
  const int fp_count =
      hard_target > 0
          ? static_cast<int>(std::lround(static_cast<double>(pool.size()) * config.fp_fraction /
                                         (1.0 - config.fp_fraction)))
          : fp_target;

  std::vector<PreferencePairData> fp_pairs;
  for (int pass = 0; static_cast<int>(fp_pairs.size()) < fp_count && pass < 4; ++pass) {
    for (int idx : order) {
      if (static_cast<int>(fp_pairs.size()) >= fp_count) break;
      try {
        PreferencePairData p = make_false_premise_pair(
            d1[static_cast<std::size_t>(idx)].scene,
            mix_seed(seed, 4, static_cast<std::uint64_t>(idx * 4 + pass)));
        p.origin_index = idx;
        if (!world::judge_response(p.scene, p.question, p.y_plus).grounded ||
            world::judge_response(p.scene, p.question, p.y_minus).grounded) {
          ++rep.drops_soundness;
          continue;
        }
        fp_pairs.push_back(std::move(p));
      } catch (const UnrealizableError&) {
        continue;
      }
    }
  }

  // Length-tilted duplication of long-form hard pairs.
  std::vector<PreferencePairData> hard_final;
  if (!pool.empty()) {
    std::vector<int> lengths;
    lengths.reserve(pool.size());
    for (const auto& p : pool) lengths.push_back(response_length(p.y_plus));
    if (config.tilt_enabled) {
      TiltConfig tc = config.tilt;
      if (!tc.target_mean) {
        double mu = 0;
        for (int l : lengths) mu += l;
        mu /= static_cast<double>(lengths.size());
        // auto targets stay inside the reachable range; explicit targets
        // keep the strict infeasibility contract
        const double reachable = max_tilt_mean(lengths, tc.cap);
        tc.target_mean = std::min(mu * config.tilt_target_factor, mu + 0.8 * (reachable - mu));
      }
      rep.tilt_target = *tc.target_mean;
      rep.solved_beta = solve_tilt_beta(lengths, *tc.target_mean, tc.cap);
      TiltConfig solved;
      solved.beta = rep.solved_beta;
      solved.cap = tc.cap;
      const std::vector<double> weights = tilt_weights(lengths, solved);
      const std::vector<int> picks =
          resample_indices(weights, static_cast<int>(pool.size()), mix_seed(seed, 5));
      hard_final.reserve(picks.size());
      for (int i : picks) hard_final.push_back(pool[static_cast<std::size_t>(i)]);
    } else {
      hard_final = pool;
    }
  }

  std::vector<PreferencePairData> out = std::move(hard_final);
  out.insert(out.end(), fp_pairs.begin(), fp_pairs.end());
  Rng final_rng(mix_seed(seed, 6));
  final_rng.shuffle(out);

  rep.emitted = static_cast<int>(out.size());
  rep.fp_pairs = static_cast<int>(fp_pairs.size());
  double d1_len = 0;
  for (const auto& s : d1) d1_len += response_length(s.answer);
  rep.d1_mean_len = d1_len / static_cast<double>(n);
  double d2_len = 0;
  for (const auto& p : out) {
    d2_len += response_length(p.y_plus);
    ++rep.tag_counts[to_string(p.tag)];
    ++rep.kind_counts[world::to_string(p.question.kind)];
  }
  rep.d2_mean_len = out.empty() ? 0 : d2_len / static_cast<double>(out.size());

  if (report) *report = rep;
  return out;
}

}  // namespace groundloom::forge
