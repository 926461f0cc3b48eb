#pragma once

#include <string>
#include <vector>

#include "groundloom/eval.hpp"
#include "groundloom/forge.hpp"
#include "json.hpp"

namespace groundloom::io {

using json = nlohmann::ordered_json;

// All object keys are emitted in a fixed order and all generation is seeded,
// so serialized artifacts are byte-stable.

json to_json(const world::Scene& scene);
world::Scene scene_from_json(const json& j);

json to_json(const world::Question& q);
world::Question question_from_json(const json& j);

json to_json(const world::AnswerSpec& spec);

json to_json(const forge::SftSample& s);
forge::SftSample sft_sample_from_json(const json& j);

json to_json(const forge::PreferencePairData& p);
forge::PreferencePairData pair_from_json(const json& j);

json to_json(const evalhall::EvalItem& item);
evalhall::EvalItem eval_item_from_json(const json& j);

json to_json(const forge::ForgeReport& r);
json to_json(const evalhall::MetricsReport& r);
json to_json(const evalhall::PairwiseReport& r);
json to_json(const evalhall::LengthStats& s);
json to_json(const evalhall::SweepReport& r);

// JSONL files: one object per line.
void write_jsonl(const std::string& path, const std::vector<json>& lines);
std::vector<json> read_jsonl(const std::string& path);

void write_d1(const std::string& path, const std::vector<forge::SftSample>& d1);
std::vector<forge::SftSample> read_d1(const std::string& path);
void write_d2(const std::string& path, const std::vector<forge::PreferencePairData>& d2);
std::vector<forge::PreferencePairData> read_d2(const std::string& path);
void write_evalset(const std::string& path, const std::vector<evalhall::EvalItem>& items);
std::vector<evalhall::EvalItem> read_evalset(const std::string& path);

// id -> token string manifest for the shared vocabulary.
void write_vocab_manifest(const std::string& path);

void write_text(const std::string& path, const std::string& content);
std::string checksum_file(const std::string& path);  // fnv1a-64, hex

}  // namespace groundloom::io
