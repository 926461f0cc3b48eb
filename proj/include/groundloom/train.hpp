#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "groundloom/forge.hpp"
#include "groundloom/objectives.hpp"

namespace groundloom::train {

using model::ModelConfig;
using model::Params;

enum class Stage : std::uint8_t { sft, dpo };
enum class OptimizerKind : std::uint8_t { sgd, adam };

struct TrainConfig {
  Stage stage = Stage::sft;
  int epochs = 4;
  int batch_size = 16;
  double learning_rate = 3e-3;
  OptimizerKind optimizer = OptimizerKind::adam;
  std::uint64_t seed = 0;
  double kl_bound = 2.0;                  // monitored, never enforced
  std::optional<double> grad_clip = 5.0;  // max global norm
  int eval_every = 50;                    // KL probe interval (dpo)
  double beta_dpo = 0.1;
  int kl_probe_prompts = 16;
  int kl_probe_len = 8;

  void validate() const;
};

struct TrainLogRecord {
  int step = 0;
  int epoch = 0;
  double loss = 0;
  double grad_norm = 0;
  double wall_ms = 0;
  std::optional<double> margin;      // dpo: mean logp(y+)-logp(y-) on the batch
  std::optional<double> kl;          // dpo: KL(p_theta || p_theta1) probe
  std::optional<bool> kl_exceeds;    // dpo: kl > kl_bound (warning only)
  std::optional<double> epoch_mean_loss;    // carried by the epoch's last record
  std::optional<double> epoch_mean_margin;  // dpo
};

using LogSink = std::function<void(const TrainLogRecord&)>;

objectives::PreferencePair encode_pair(const forge::PreferencePairData& pair,
                                       const ModelConfig& config);

// Stage 1: cross-entropy on D1. Deterministic per (config, seed, data);
// aborts with DivergenceError on a non-finite loss or parameter.
Params train_sft(const std::vector<forge::SftSample>& d1, const TrainConfig& config, Params init,
                 const LogSink& log = {});

// Stage 2: DPO on D2 anchored to a frozen copy of theta1. Logs margins and a
// periodic KL probe; warns (never halts) when KL exceeds kl_bound.
Params train_dpo(const Params& theta1, const std::vector<forge::PreferencePairData>& d2,
                 const TrainConfig& config, const LogSink& log = {});

// Fraction of pairs with logp(y+) > logp(y-) under params.
double pair_preference_accuracy(const Params& params,
                                const std::vector<forge::PreferencePairData>& d2);

// Versioned binary container + JSON sidecar manifest with shapes and a
// content checksum. load(save(p)) is bitwise exact.
void save_checkpoint(const Params& params, const std::string& path);
Params load_checkpoint(const std::string& path);

// JSONL sink factory for the training log (one record per step).
LogSink jsonl_log_sink(const std::string& path);

}  // namespace groundloom::train
