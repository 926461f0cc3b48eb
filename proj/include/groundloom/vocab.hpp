#pragma once

#include <array>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "groundloom/types.hpp"

namespace groundloom {

inline constexpr int kNumCategories = 12;
inline constexpr int kNumColors = 8;
inline constexpr int kNumSizes = 3;
inline constexpr int kNumMaterialTokens = 5;  // "unknown" material answers via unk
inline constexpr int kNumRelations = 4;
inline constexpr int kNumDigits = 10;
inline constexpr int kOcrAlphabet = 16;
inline constexpr int kMaxGrid = 12;
inline constexpr int kNumPropKinds = 5;

// Fixed vocabulary shared by the scene encoder, the answer grammar and the
// model. Layout is frozen; ids are stable across runs and serialize as-is.
class Vocab {
 public:
  static const Vocab& get();

  int size() const { return static_cast<int>(texts_.size()); }
  const std::string& text(TokenId id) const;
  TokenId id(std::string_view text) const;
  bool contains(std::string_view text) const;
  const std::vector<std::string>& texts() const { return texts_; }

 private:
  Vocab();
  std::vector<std::string> texts_;
  std::unordered_map<std::string, TokenId> ids_;
};

// Cached token ids for hot paths.
struct TokenIds {
  TokenId pad, sep, ans, eos, conj, obj, hidden, label, unk;
  TokenId bright, dim;
  std::array<TokenId, kNumCategories> category;
  std::array<TokenId, kNumColors> color;
  std::array<TokenId, kNumSizes> size;
  std::array<TokenId, kNumMaterialTokens> material;
  std::array<TokenId, kNumRelations> relation;
  std::array<TokenId, kNumDigits> digit;
  std::array<TokenId, kOcrAlphabet> ocr;
  std::array<TokenId, kMaxGrid> pos_col;
  std::array<TokenId, kMaxGrid> pos_row;
  TokenId q_exists, q_count, q_color, q_material, q_rel, q_text, q_fp, q_prop;
  TokenId c_exists, c_absent, c_count, c_attr, c_rel, c_text, c_prop, c_no_such;
  TokenId kw_color, kw_material, kw_size;
  std::array<TokenId, kNumPropKinds> prop;
};

const TokenIds& tok();

// The 16-symbol OCR alphabet, index-aligned with tok().ocr.
const std::string& ocr_alphabet();

bool is_category_token(TokenId id);
bool is_color_token(TokenId id);
bool is_size_token(TokenId id);
bool is_material_token(TokenId id);
bool is_relation_token(TokenId id);
bool is_digit_token(TokenId id);
bool is_ocr_token(TokenId id);
bool is_prop_token(TokenId id);

}  // namespace groundloom
