#include "groundloom/serialize.hpp"

#include <fstream>

#include "groundloom/hash.hpp"

namespace groundloom::io {

using namespace world;

json to_json(const Scene& scene) {
  json objs = json::array();
  for (const auto& o : scene.objects) {
    json jo;
    jo["id"] = o.id;
    jo["category"] = to_string(o.category);
    jo["color"] = to_string(o.color);
    jo["size"] = to_string(o.size);
    jo["material"] = to_string(o.material);
    jo["pos"] = {o.col, o.row};
    jo["occlusion"] = to_string(o.occlusion);
    if (o.label) jo["label"] = {{"text", o.label->text}, {"legible", o.label->legible_mask}};
    objs.push_back(std::move(jo));
  }
  json j;
  j["seed"] = scene.seed;
  j["grid"] = {scene.grid_w, scene.grid_h};
  j["lighting"] = to_string(scene.lighting);
  j["tier"] = to_string(scene.tier);
  j["objects"] = std::move(objs);
  return j;
}

Scene scene_from_json(const json& j) {
  Scene s;
  s.seed = j.at("seed").get<std::uint64_t>();
  s.grid_w = j.at("grid").at(0).get<int>();
  s.grid_h = j.at("grid").at(1).get<int>();
  s.lighting = lighting_from_string(j.at("lighting").get<std::string>());
  s.tier = tier_from_string(j.at("tier").get<std::string>());
  for (const auto& jo : j.at("objects")) {
    SceneObject o;
    o.id = jo.at("id").get<int>();
    o.category = category_from_string(jo.at("category").get<std::string>());
    o.color = color_from_string(jo.at("color").get<std::string>());
    o.size = objsize_from_string(jo.at("size").get<std::string>());
    o.material = material_from_string(jo.at("material").get<std::string>());
    o.col = jo.at("pos").at(0).get<int>();
    o.row = jo.at("pos").at(1).get<int>();
    o.occlusion = occlusion_from_string(jo.at("occlusion").get<std::string>());
    if (jo.contains("label")) {
      TextLabel lab;
      lab.text = jo.at("label").at("text").get<std::string>();
      lab.legible_mask = jo.at("label").at("legible").get<std::uint32_t>();
      o.label = lab;
    }
    s.objects.push_back(std::move(o));
  }
  return s;
}

json to_json(const Question& q) {
  json target;
  if (q.target.category) target["category"] = to_string(*q.target.category);
  if (q.target.category_b) target["category_b"] = to_string(*q.target.category_b);
  if (q.target.color) target["color"] = to_string(*q.target.color);
  if (q.target.attr) target["attr"] = to_string(*q.target.attr);
  if (q.target.prop) target["prop"] = to_string(*q.target.prop);
  json j;
  j["kind"] = to_string(q.kind);
  j["tier"] = to_string(q.tier);
  j["tokens"] = q.tokens;
  j["target"] = std::move(target);
  return j;
}

Question question_from_json(const json& j) {
  Question q;
  q.kind = question_kind_from_string(j.at("kind").get<std::string>());
  q.tier = tier_from_string(j.at("tier").get<std::string>());
  q.tokens = j.at("tokens").get<TokenSeq>();
  const auto& t = j.at("target");
  if (t.contains("category")) q.target.category = category_from_string(t.at("category"));
  if (t.contains("category_b")) q.target.category_b = category_from_string(t.at("category_b"));
  if (t.contains("color")) q.target.color = color_from_string(t.at("color"));
  if (t.contains("attr")) q.target.attr = attr_kind_from_string(t.at("attr"));
  if (t.contains("prop")) q.target.prop = prop_kind_from_string(t.at("prop"));
  return q;
}

json to_json(const AnswerSpec& spec) {
  json j;
  j["canonical"] = spec.canonical;
  j["requires_abstention"] = spec.requires_abstention;
  j["requires_rejection"] = spec.requires_rejection;
  json acc = json::array();
  for (const auto& c : spec.acceptable) acc.push_back(claim_to_string(c));
  j["acceptable"] = std::move(acc);
  return j;
}

json to_json(const forge::SftSample& s) {
  json j;
  j["scene"] = to_json(s.scene);
  j["question"] = to_json(s.question);
  j["answer"] = s.answer;
  j["tier"] = to_string(s.tier);
  return j;
}

forge::SftSample sft_sample_from_json(const json& j) {
  forge::SftSample s;
  s.scene = scene_from_json(j.at("scene"));
  s.question = question_from_json(j.at("question"));
  s.answer = j.at("answer").get<TokenSeq>();
  s.tier = tier_from_string(j.at("tier").get<std::string>());
  return s;
}

json to_json(const forge::PreferencePairData& p) {
  json j;
  j["scene"] = to_json(p.scene);
  j["question"] = to_json(p.question);
  j["y_plus"] = p.y_plus;
  j["y_minus"] = p.y_minus;
  j["tag"] = forge::to_string(p.tag);
  j["origin_index"] = p.origin_index;
  return j;
}

forge::PreferencePairData pair_from_json(const json& j) {
  forge::PreferencePairData p;
  p.scene = scene_from_json(j.at("scene"));
  p.question = question_from_json(j.at("question"));
  p.y_plus = j.at("y_plus").get<TokenSeq>();
  p.y_minus = j.at("y_minus").get<TokenSeq>();
  p.tag = forge::perturbation_tag_from_string(j.at("tag").get<std::string>());
  p.origin_index = j.at("origin_index").get<int>();
  return p;
}

json to_json(const evalhall::EvalItem& item) {
  json j;
  j["id"] = item.id;
  j["scene"] = to_json(item.scene);
  j["question"] = to_json(item.question);
  return j;
}

evalhall::EvalItem eval_item_from_json(const json& j) {
  evalhall::EvalItem item;
  item.id = j.at("id").get<int>();
  item.scene = scene_from_json(j.at("scene"));
  item.question = question_from_json(j.at("question"));
  return item;
}

json to_json(const forge::ForgeReport& r) {
  json j;
  j["d1_size"] = r.d1_size;
  j["emitted"] = r.emitted;
  j["fp_pairs"] = r.fp_pairs;
  j["drops"] = {{"augment", r.drops_augment},
                {"perturb", r.drops_perturb},
                {"soundness", r.drops_soundness}};
  j["tag_counts"] = r.tag_counts;
  j["kind_counts"] = r.kind_counts;
  j["d1_mean_len"] = r.d1_mean_len;
  j["d2_mean_len"] = r.d2_mean_len;
  j["solved_beta"] = r.solved_beta;
  j["tilt_target"] = r.tilt_target;
  return j;
}

json to_json(const evalhall::MetricsReport& r) {
  json j;
  j["n"] = r.n;
  j["hallucination_rate"] = r.hallucination_rate;
  j["abstention_accuracy"] = r.abstention_accuracy;
  j["premise_rejection_rate"] = r.premise_rejection_rate;
  j["mean_validated_claims"] = r.mean_validated_claims;
  json pk;
  for (const auto& [kind, km] : r.per_kind)
    pk[kind] = {{"n", km.n},
                {"hallucination_rate", km.hallucination_rate},
                {"grounded_rate", km.grounded_rate},
                {"abstention_rate", km.abstention_rate}};
  j["per_kind"] = std::move(pk);
  return j;
}

json to_json(const evalhall::PairwiseReport& r) {
  json j;
  j["counts"] = {{"a_wins", r.counts.a_wins},
                 {"b_wins", r.counts.b_wins},
                 {"tie", r.counts.tie},
                 {"both_wrong", r.counts.both_wrong},
                 {"error", r.counts.error}};
  j["total"] = r.total;
  j["pct"] = {{"a_wins", r.a_wins_pct},
              {"b_wins", r.b_wins_pct},
              {"tie", r.tie_pct},
              {"both_wrong", r.both_wrong_pct},
              {"error", r.error_pct}};
  j["delta_win_rate"] = r.delta_win_rate;
  return j;
}

json to_json(const evalhall::LengthStats& s) {
  json j;
  j["n"] = s.n;
  j["mean"] = s.mean;
  j["median"] = s.median;
  j["bin_width"] = s.bin_width;
  json bins = json::array();
  for (const auto& [start, count] : s.bins) bins.push_back({start, count});
  j["bins"] = std::move(bins);
  return j;
}

json to_json(const evalhall::SweepReport& r) {
  json pts = json::array();
  for (const auto& pt : r.points) {
    json jp;
    jp["strategy"] = model::decode_strategy_name(pt.cfg.strategy);
    jp["temperature"] = pt.cfg.temperature;
    jp["k"] = pt.cfg.k;
    jp["p"] = pt.cfg.p;
    jp["seed"] = pt.cfg.seed;
    jp["metrics"] = to_json(pt.metrics);
    pts.push_back(std::move(jp));
  }
  json j;
  j["points"] = std::move(pts);
  j["spearman_temp_vs_rate"] = r.spearman_temp_vs_rate;
  return j;
}

void write_jsonl(const std::string& path, const std::vector<json>& lines) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write: " + path);
  for (const auto& j : lines) out << j.dump() << "\n";
  if (!out) throw IoError("short write: " + path);
}

std::vector<json> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  std::vector<json> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw CorruptionError("bad JSONL line in " + path + ": " + e.what());
    }
  }
  return out;
}

void write_d1(const std::string& path, const std::vector<forge::SftSample>& d1) {
  std::vector<json> lines;
  lines.reserve(d1.size());
  for (const auto& s : d1) lines.push_back(to_json(s));
  write_jsonl(path, lines);
}

std::vector<forge::SftSample> read_d1(const std::string& path) {
  std::vector<forge::SftSample> out;
  for (const auto& j : read_jsonl(path)) out.push_back(sft_sample_from_json(j));
  return out;
}

void write_d2(const std::string& path, const std::vector<forge::PreferencePairData>& d2) {
  std::vector<json> lines;
  lines.reserve(d2.size());
  for (const auto& p : d2) lines.push_back(to_json(p));
  write_jsonl(path, lines);
}

std::vector<forge::PreferencePairData> read_d2(const std::string& path) {
  std::vector<forge::PreferencePairData> out;
  for (const auto& j : read_jsonl(path)) out.push_back(pair_from_json(j));
  return out;
}

void write_evalset(const std::string& path, const std::vector<evalhall::EvalItem>& items) {
  std::vector<json> lines;
  lines.reserve(items.size());
  for (const auto& it : items) lines.push_back(to_json(it));
  write_jsonl(path, lines);
}

std::vector<evalhall::EvalItem> read_evalset(const std::string& path) {
  std::vector<evalhall::EvalItem> out;
  for (const auto& j : read_jsonl(path)) out.push_back(eval_item_from_json(j));
  return out;
}

void write_vocab_manifest(const std::string& path) {
  json tokens = json::array();
  for (const auto& t : Vocab::get().texts()) tokens.push_back(t);
  json j;
  j["vocab_size"] = Vocab::get().size();
  j["tokens"] = std::move(tokens);
  write_text(path, j.dump(2) + "\n");
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw IoError("cannot write: " + path);
  out << content;
  if (!out) throw IoError("short write: " + path);
}

std::string checksum_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for checksum: " + path);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return hex64(fnv1a64(data.data(), data.size()));
}

}  // namespace groundloom::io
