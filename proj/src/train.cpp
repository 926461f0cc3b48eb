#include "groundloom/train.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>

#include "groundloom/hash.hpp"
#include "groundloom/rng.hpp"
#include "json.hpp"

namespace groundloom::train {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

using json = nlohmann::json;
using model::Grads;

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (learning_rate < 0) throw ConfigError("learning_rate must be >= 0");
  if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
  if (beta_dpo <= 0) throw ConfigError("beta_dpo must be > 0");
  if (kl_bound < 0) throw ConfigError("kl_bound must be >= 0");
  if (grad_clip && *grad_clip <= 0) throw ConfigError("grad_clip must be > 0");
  if (kl_probe_prompts < 1 || kl_probe_len < 1) throw ConfigError("kl probe sizes must be >= 1");
}

objectives::PreferencePair encode_pair(const forge::PreferencePairData& pair,
                                       const ModelConfig& config) {
  objectives::PreferencePair out;
  out.x = model::encode_input(pair.scene, pair.question, config);
  out.y_plus = pair.y_plus;
  out.y_minus = pair.y_minus;
  return out;
}

namespace {

struct Adam {
  Grads m, v;
  long t = 0;
  static constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  explicit Adam(const Params& p) : m(Grads::zeros_like(p)), v(Grads::zeros_like(p)) {}

  void step(Params& p, const Grads& g, double lr) {
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    auto update = [&](Mat& theta, Mat& mm, Mat& vv, const Mat& grad) {
      mm = beta1 * mm + (1.0 - beta1) * grad;
      vv = beta2 * vv + (1.0 - beta2) * grad.cwiseProduct(grad);
      theta.array() -= lr * (mm.array() / bc1) / ((vv.array() / bc2).sqrt() + eps);
    };
    update(p.embed, m.embed, v.embed, g.embed);
    update(p.pos, m.pos, v.pos, g.pos);
    update(p.wq, m.wq, v.wq, g.wq);
    update(p.wk, m.wk, v.wk, g.wk);
    update(p.wv, m.wv, v.wv, g.wv);
    update(p.wo, m.wo, v.wo, g.wo);
    update(p.w1, m.w1, v.w1, g.w1);
    update(p.w2, m.w2, v.w2, g.w2);
    update(p.wout, m.wout, v.wout, g.wout);
  }
};

void sgd_step(Params& p, const Grads& g, double lr) {
  p.embed -= lr * g.embed;
  p.pos -= lr * g.pos;
  p.wq -= lr * g.wq;
  p.wk -= lr * g.wk;
  p.wv -= lr * g.wv;
  p.wo -= lr * g.wo;
  p.w1 -= lr * g.w1;
  p.w2 -= lr * g.w2;
  p.wout -= lr * g.wout;
}

double clip_grad(Grads& g, const std::optional<double>& max_norm) {
  const double norm = std::sqrt(g.squared_norm());
  if (max_norm && norm > *max_norm && norm > 0) g.scale(*max_norm / norm);
  return norm;
}

bool params_finite(const Params& p) {
  bool ok = true;
  model::for_each_tensor(p, [&](std::string_view, const Mat& m) { ok = ok && m.allFinite(); });
  return ok;
}

void ensure_sane(double loss, const Params& p, int step, const LogSink& log) {
  if (std::isfinite(loss) && params_finite(p)) return;
  if (log) {
    TrainLogRecord rec;
    rec.step = step;
    rec.loss = loss;
    log(rec);
  }
  throw DivergenceError("training diverged at step " + std::to_string(step));
}

double now_ms() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch()).count();
}

}  // namespace

Params train_sft(const std::vector<forge::SftSample>& d1, const TrainConfig& config, Params init,
                 const LogSink& log) {
  config.validate();
  if (config.stage != Stage::sft) throw ConfigError("train_sft: config stage is not sft");
  if (d1.empty()) throw ArgumentError("train_sft: empty dataset");

  std::vector<std::pair<model::PromptEncoding, TokenSeq>> data;
  data.reserve(d1.size());
  for (const auto& s : d1)
    data.emplace_back(model::encode_input(s.scene, s.question, init.config), s.answer);

  Params params = std::move(init);
  Adam adam(params);
  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  int step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(config.seed, 0x17A1ULL, static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);
    double epoch_loss = 0;
    int epoch_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const double t0 = now_ms();
      std::vector<std::pair<model::PromptEncoding, TokenSeq>> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + static_cast<std::size_t>(config.batch_size)); ++i)
        batch.push_back(data[static_cast<std::size_t>(order[i])]);

      auto res = objectives::ce_loss(params, batch);
      ensure_sane(res.loss, params, step, log);
      const double norm = clip_grad(res.grad, config.grad_clip);
      if (config.optimizer == OptimizerKind::adam)
        adam.step(params, res.grad, config.learning_rate);
      else
        sgd_step(params, res.grad, config.learning_rate);
      ensure_sane(res.loss, params, step, log);

      epoch_loss += res.loss;
      ++epoch_batches;
      if (log) {
        TrainLogRecord rec;
        rec.step = step;
        rec.epoch = epoch;
        rec.loss = res.loss;
        rec.grad_norm = norm;
        rec.wall_ms = now_ms() - t0;
        if (start + static_cast<std::size_t>(config.batch_size) >= order.size())
          rec.epoch_mean_loss = epoch_loss / epoch_batches;
        log(rec);
      }
      ++step;
    }
  }
  return params;
}

Params train_dpo(const Params& theta1, const std::vector<forge::PreferencePairData>& d2,
                 const TrainConfig& config, const LogSink& log) {
  config.validate();
  if (config.stage != Stage::dpo) throw ConfigError("train_dpo: config stage is not dpo");
  if (d2.empty()) throw ArgumentError("train_dpo: empty dataset");

  const Params reference = theta1;  // frozen anchor
  Params params = theta1;

  std::vector<objectives::PreferencePair> pairs;
  pairs.reserve(d2.size());
  for (const auto& p : d2) pairs.push_back(encode_pair(p, params.config));

  // The reference never changes, so its per-pair logprobs are computed once.
  std::vector<std::pair<Scalar, Scalar>> ref_cache;
  ref_cache.reserve(pairs.size());
  for (const auto& p : pairs)
    ref_cache.emplace_back(model::sequence_logprob(reference, p.x, p.y_plus),
                           model::sequence_logprob(reference, p.x, p.y_minus));

  std::vector<model::PromptEncoding> probe;
  for (std::size_t i = 0; i < pairs.size() && static_cast<int>(probe.size()) < config.kl_probe_prompts; ++i)
    probe.push_back(pairs[i].x);

  objectives::DpoConfig dcfg;
  dcfg.beta_dpo = config.beta_dpo;
  dcfg.reference = &reference;

  Adam adam(params);
  std::vector<int> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);

  int step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(config.seed, 0x17A2ULL, static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);
    double epoch_loss = 0, epoch_margin = 0;
    int epoch_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const double t0 = now_ms();
      std::vector<objectives::PreferencePair> batch;
      std::vector<std::pair<Scalar, Scalar>> batch_cache;
      for (std::size_t i = start; i < std::min(order.size(), start + static_cast<std::size_t>(config.batch_size)); ++i) {
        batch.push_back(pairs[static_cast<std::size_t>(order[i])]);
        batch_cache.push_back(ref_cache[static_cast<std::size_t>(order[i])]);
      }

      auto res = objectives::dpo_loss(params, dcfg, batch, &batch_cache);
      ensure_sane(res.loss, params, step, log);
      const double norm = clip_grad(res.grad, config.grad_clip);
      if (config.optimizer == OptimizerKind::adam)
        adam.step(params, res.grad, config.learning_rate);
      else
        sgd_step(params, res.grad, config.learning_rate);
      ensure_sane(res.loss, params, step, log);

      epoch_loss += res.loss;
      epoch_margin += res.mean_margin;
      ++epoch_batches;
      if (log) {
        TrainLogRecord rec;
        rec.step = step;
        rec.epoch = epoch;
        rec.loss = res.loss;
        rec.margin = res.mean_margin;
        rec.grad_norm = norm;
        rec.wall_ms = now_ms() - t0;
        if (step % config.eval_every == 0) {
          rec.kl = objectives::kl_to_reference(params, reference, probe, config.kl_probe_len);
          rec.kl_exceeds = *rec.kl > config.kl_bound;
        }
        if (start + static_cast<std::size_t>(config.batch_size) >= order.size()) {
          rec.epoch_mean_loss = epoch_loss / epoch_batches;
          rec.epoch_mean_margin = epoch_margin / epoch_batches;
        }
        log(rec);
      }
      ++step;
    }
  }
  return params;
}

double pair_preference_accuracy(const Params& params,
                                const std::vector<forge::PreferencePairData>& d2) {
  if (d2.empty()) throw ArgumentError("pair_preference_accuracy: empty dataset");
  int good = 0;
  for (const auto& p : d2) {
    const auto enc = encode_pair(p, params.config);
    if (model::sequence_logprob(params, enc.x, enc.y_plus) >
        model::sequence_logprob(params, enc.x, enc.y_minus))
      ++good;
  }
  return static_cast<double>(good) / static_cast<double>(d2.size());
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'G', 'L', 'C', 'K', 'P', 'T', '0', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

void write_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::ifstream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw CorruptionError("checkpoint truncated");
  return v;
}

}  // namespace

void save_checkpoint(const Params& params, const std::string& path) {
  namespace fs = std::filesystem;
  const std::string tmp = path + ".tmp";
  std::string payload;
  model::for_each_tensor(params, [&](std::string_view, const Mat& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const double v = m(r, c);
        payload.append(reinterpret_cast<const char*>(&v), sizeof v);
      }
  });

  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    out.write(kMagic, sizeof kMagic);
    write_u32(out, kCheckpointVersion);
    write_u32(out, static_cast<std::uint32_t>(params.config.vocab_size));
    write_u32(out, static_cast<std::uint32_t>(params.config.dim));
    write_u32(out, static_cast<std::uint32_t>(params.config.max_len));
    write_u32(out, static_cast<std::uint32_t>(params.config.max_answer_len));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw IoError("short write: " + path);
  }
  fs::rename(tmp, path);

  json manifest;
  manifest["format_version"] = kCheckpointVersion;
  manifest["tool_version"] = kToolVersion;
  manifest["config"] = {{"vocab_size", params.config.vocab_size},
                        {"dim", params.config.dim},
                        {"max_len", params.config.max_len},
                        {"max_answer_len", params.config.max_answer_len}};
  json tensors = json::array();
  model::for_each_tensor(params, [&](std::string_view name, const Mat& m) {
    tensors.push_back({{"name", std::string(name)}, {"rows", m.rows()}, {"cols", m.cols()}});
  });
  manifest["tensors"] = tensors;
  manifest["payload_checksum"] = hex64(fnv1a64(payload.data(), payload.size()));

  const std::string mtmp = path + ".manifest.json.tmp";
  {
    std::ofstream out(mtmp, std::ios::trunc);
    out << manifest.dump(2) << "\n";
    if (!out) throw IoError("cannot write manifest for: " + path);
  }
  fs::rename(mtmp, path + ".manifest.json");
}

Params load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);

  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::string(magic, 8) != std::string(kMagic, 8))
    throw VersionError("not a checkpoint file: " + path);
  const std::uint32_t version = read_u32(in);
  if (version != kCheckpointVersion)
    throw VersionError("unsupported checkpoint version " + std::to_string(version));

  ModelConfig cfg;
  cfg.vocab_size = static_cast<int>(read_u32(in));
  cfg.dim = static_cast<int>(read_u32(in));
  cfg.max_len = static_cast<int>(read_u32(in));
  cfg.max_answer_len = static_cast<int>(read_u32(in));
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw VersionError(std::string("checkpoint header invalid: ") + e.what());
  }

  std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  const std::string mpath = path + ".manifest.json";
  std::ifstream min(mpath);
  if (!min) throw IoError("missing checkpoint manifest: " + mpath);
  json manifest;
  try {
    min >> manifest;
  } catch (const json::exception& e) {
    throw CorruptionError(std::string("manifest unreadable: ") + e.what());
  }
  const auto& mc = manifest.at("config");
  if (mc.at("vocab_size") != cfg.vocab_size || mc.at("dim") != cfg.dim ||
      mc.at("max_len") != cfg.max_len || mc.at("max_answer_len") != cfg.max_answer_len)
    throw VersionError("checkpoint/manifest shape mismatch");

  Params p = Params::zeros(cfg);
  std::size_t expect = 0;
  model::for_each_tensor(p, [&](std::string_view, const Mat& m) {
    expect += static_cast<std::size_t>(m.rows() * m.cols()) * sizeof(double);
  });
  if (payload.size() != expect) throw CorruptionError("checkpoint payload size mismatch");
  if (manifest.at("payload_checksum") != hex64(fnv1a64(payload.data(), payload.size())))
    throw CorruptionError("checkpoint checksum mismatch");

  std::size_t off = 0;
  model::for_each_tensor(p, [&](std::string_view, Mat& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        double v;
        std::memcpy(&v, payload.data() + off, sizeof v);
        off += sizeof v;
        m(r, c) = v;
      }
  });
  return p;
}

LogSink jsonl_log_sink(const std::string& path) {
  auto out = std::make_shared<std::ofstream>(path, std::ios::trunc);
  if (!*out) throw IoError("cannot open train log: " + path);
  return [out](const TrainLogRecord& rec) {
    json j;
    j["step"] = rec.step;
    j["epoch"] = rec.epoch;
    j["loss"] = rec.loss;
    j["grad_norm"] = rec.grad_norm;
    j["wall_ms"] = rec.wall_ms;
    if (rec.margin) j["margin"] = *rec.margin;
    if (rec.kl) j["kl"] = *rec.kl;
    if (rec.kl_exceeds) j["kl_exceeds"] = *rec.kl_exceeds;
    if (rec.epoch_mean_loss) j["epoch_mean_loss"] = *rec.epoch_mean_loss;
    if (rec.epoch_mean_margin) j["epoch_mean_margin"] = *rec.epoch_mean_margin;
    (*out) << j.dump() << "\n";
    out->flush();
  };
}

}  // namespace groundloom::train
