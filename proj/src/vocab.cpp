#include "groundloom/vocab.hpp"

namespace groundloom {

namespace {

const char* kCategoryNames[kNumCategories] = {"cup",  "bowl",  "book", "box",
                                              "dog",  "cat",   "car",  "bus",
                                              "lamp", "clock", "plant", "ball"};
const char* kColorNames[kNumColors] = {"red",   "blue",  "green",  "yellow",
                                       "black", "white", "orange", "purple"};
const char* kSizeNames[kNumSizes] = {"small", "medium", "large"};
const char* kMaterialNames[kNumMaterialTokens] = {"wood", "metal", "plastic",
                                                  "glass", "fabric"};
const char* kRelationNames[kNumRelations] = {"left_of", "right_of", "above",
                                             "below"};
const char kOcrChars[kOcrAlphabet + 1] = "ABCDEFGHKLMNPRTX";
const char* kPropNames[kNumPropKinds] = {"price", "pages", "weight", "brand",
                                         "age"};

}  // namespace

Vocab::Vocab() {
  auto add = [this](std::string t) {
    ids_.emplace(t, static_cast<TokenId>(texts_.size()));
    texts_.push_back(std::move(t));
  };

  add("<pad>");
  add("<sep>");
  add("<ans>");
  add("<eos>");
  add("and");
  add("obj");
  add("hidden");
  add("label");
  add("unk");
  add("bright");
  add("dim");
  for (const char* n : kCategoryNames) add(n);
  for (const char* n : kColorNames) add(n);
  for (const char* n : kSizeNames) add(n);
  for (const char* n : kMaterialNames) add(n);
  for (const char* n : kRelationNames) add(n);
  for (int d = 0; d < kNumDigits; ++d) add(std::string(1, static_cast<char>('0' + d)));
  for (int c = 0; c < kOcrAlphabet; ++c) add(std::string(1, kOcrChars[c]));
  for (int c = 0; c < kMaxGrid; ++c) add("pos_c" + std::to_string(c));
  for (int r = 0; r < kMaxGrid; ++r) add("pos_r" + std::to_string(r));
  add("q_exists");
  add("q_count");
  add("q_color");
  add("q_material");
  add("q_rel");
  add("q_text");
  add("q_fp");
  add("q_prop");
  add("exists");
  add("absent");
  add("count");
  add("attr");
  add("rel");
  add("text");
  add("prop");
  add("no_such");
  add("color");
  add("material");
  add("size");
  for (const char* n : kPropNames) add(n);
}

const Vocab& Vocab::get() {
  static const Vocab v;
  return v;
}

const std::string& Vocab::text(TokenId id) const {
  if (id < 0 || id >= size()) throw ArgumentError("token id out of range: " + std::to_string(id));
  return texts_[static_cast<std::size_t>(id)];
}

TokenId Vocab::id(std::string_view text) const {
  auto it = ids_.find(std::string(text));
  if (it == ids_.end()) throw ArgumentError("unknown token: " + std::string(text));
  return it->second;
}

bool Vocab::contains(std::string_view text) const {
  return ids_.count(std::string(text)) > 0;
}

const TokenIds& tok() {
  static const TokenIds t = [] {
    const Vocab& v = Vocab::get();
    TokenIds t{};
    t.pad = v.id("<pad>");
    t.sep = v.id("<sep>");
    t.ans = v.id("<ans>");
    t.eos = v.id("<eos>");
    t.conj = v.id("and");
    t.obj = v.id("obj");
    t.hidden = v.id("hidden");
    t.label = v.id("label");
    t.unk = v.id("unk");
    t.bright = v.id("bright");
    t.dim = v.id("dim");
    for (int i = 0; i < kNumCategories; ++i) t.category[i] = v.id(kCategoryNames[i]);
    for (int i = 0; i < kNumColors; ++i) t.color[i] = v.id(kColorNames[i]);
    for (int i = 0; i < kNumSizes; ++i) t.size[i] = v.id(kSizeNames[i]);
    for (int i = 0; i < kNumMaterialTokens; ++i) t.material[i] = v.id(kMaterialNames[i]);
    for (int i = 0; i < kNumRelations; ++i) t.relation[i] = v.id(kRelationNames[i]);
    for (int i = 0; i < kNumDigits; ++i) t.digit[i] = v.id(std::string(1, static_cast<char>('0' + i)));
    for (int i = 0; i < kOcrAlphabet; ++i) t.ocr[i] = v.id(std::string(1, kOcrChars[i]));
    for (int i = 0; i < kMaxGrid; ++i) t.pos_col[i] = v.id("pos_c" + std::to_string(i));
    for (int i = 0; i < kMaxGrid; ++i) t.pos_row[i] = v.id("pos_r" + std::to_string(i));
    t.q_exists = v.id("q_exists");
    t.q_count = v.id("q_count");
    t.q_color = v.id("q_color");
    t.q_material = v.id("q_material");
    t.q_rel = v.id("q_rel");
    t.q_text = v.id("q_text");
    t.q_fp = v.id("q_fp");
    t.q_prop = v.id("q_prop");
    t.c_exists = v.id("exists");
    t.c_absent = v.id("absent");
    t.c_count = v.id("count");
    t.c_attr = v.id("attr");
    t.c_rel = v.id("rel");
    t.c_text = v.id("text");
    t.c_prop = v.id("prop");
    t.c_no_such = v.id("no_such");
    t.kw_color = v.id("color");
    t.kw_material = v.id("material");
    t.kw_size = v.id("size");
    for (int i = 0; i < kNumPropKinds; ++i) t.prop[i] = v.id(kPropNames[i]);
    return t;
  }();
  return t;
}

const std::string& ocr_alphabet() {
  static const std::string a = kOcrChars;
  return a;
}

namespace {
template <std::size_t N>
bool in_array(const std::array<TokenId, N>& a, TokenId id) {
  for (TokenId x : a)
    if (x == id) return true;
  return false;
}
}  // namespace

bool is_category_token(TokenId id) { return in_array(tok().category, id); }
bool is_color_token(TokenId id) { return in_array(tok().color, id); }
bool is_size_token(TokenId id) { return in_array(tok().size, id); }
bool is_material_token(TokenId id) { return in_array(tok().material, id); }
bool is_relation_token(TokenId id) { return in_array(tok().relation, id); }
bool is_digit_token(TokenId id) { return in_array(tok().digit, id); }
bool is_ocr_token(TokenId id) { return in_array(tok().ocr, id); }
bool is_prop_token(TokenId id) { return in_array(tok().prop, id); }

}  // namespace groundloom
