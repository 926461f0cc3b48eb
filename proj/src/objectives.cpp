#include "groundloom/objectives.hpp"

#include <cmath>

namespace groundloom::objectives {

LossResult ce_loss(const Params& params,
                   const std::vector<std::pair<PromptEncoding, TokenSeq>>& batch) {
  if (batch.empty()) throw ArgumentError("ce_loss: empty batch");
  LossResult res;
  res.grad = Grads::zeros_like(params);
  // Accumulation order is sample-index ascending for bitwise stability.
  for (const auto& [x, y] : batch) {
    Grads g = Grads::zeros_like(params);
    const Scalar lp = model::sequence_logprob_grad(params, x, y, g);
    res.loss -= lp;
    res.grad.add_scaled(g, -1.0);
  }
  const Scalar inv = 1.0 / static_cast<Scalar>(batch.size());
  res.loss *= inv;
  res.grad.scale(inv);
  return res;
}

DpoResult dpo_loss(const Params& params, const DpoConfig& cfg,
                   const std::vector<PreferencePair>& pairs,
                   const std::vector<std::pair<Scalar, Scalar>>* ref_logprobs) {
  if (pairs.empty()) throw ArgumentError("dpo_loss: empty pair set");
  if (!cfg.reference) throw ConfigError("dpo_loss: no reference params");
  if (cfg.beta_dpo <= 0) throw ConfigError("dpo_loss: beta must be > 0");
  if (cfg.reference->config != params.config)
    throw ConfigError("dpo_loss: reference shape mismatch");
  if (ref_logprobs && ref_logprobs->size() != pairs.size())
    throw ArgumentError("dpo_loss: cache size mismatch");

  DpoResult res;
  res.grad = Grads::zeros_like(params);
  int preferred = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const PreferencePair& pr = pairs[i];
    Grads gp = Grads::zeros_like(params);
    Grads gm = Grads::zeros_like(params);
    const Scalar lp_plus = model::sequence_logprob_grad(params, pr.x, pr.y_plus, gp);
    const Scalar lp_minus = model::sequence_logprob_grad(params, pr.x, pr.y_minus, gm);
    const Scalar lr_plus =
        ref_logprobs ? (*ref_logprobs)[i].first
                     : model::sequence_logprob(*cfg.reference, pr.x, pr.y_plus);
    const Scalar lr_minus =
        ref_logprobs ? (*ref_logprobs)[i].second
                     : model::sequence_logprob(*cfg.reference, pr.x, pr.y_minus);

    const Scalar margin = cfg.beta_dpo * ((lp_plus - lr_plus) - (lp_minus - lr_minus));
    // -log sigmoid(m) computed as softplus(-m) for stability
    const Scalar loss = margin > 0 ? std::log1p(std::exp(-margin))
                                   : -margin + std::log1p(std::exp(margin));
    res.loss += loss;
    // d/dm of -log sigmoid(m) is -sigmoid(-m)
    const Scalar w = -1.0 / (1.0 + std::exp(margin));
    res.grad.add_scaled(gp, w * cfg.beta_dpo);
    res.grad.add_scaled(gm, -w * cfg.beta_dpo);

    res.mean_margin += lp_plus - lp_minus;
    if (lp_plus > lp_minus) ++preferred;
  }
  const Scalar inv = 1.0 / static_cast<Scalar>(pairs.size());
  res.loss *= inv;
  res.grad.scale(inv);
  res.mean_margin *= inv;
  res.frac_preferred = static_cast<Scalar>(preferred) * inv;
  return res;
}

std::vector<Scalar> group_advantages(const std::vector<Scalar>& rewards) {
  if (rewards.size() < 2) throw ArgumentError("group_advantages: need >= 2 rewards");
  const Scalar n = static_cast<Scalar>(rewards.size());
  Scalar mean = 0;
  for (Scalar r : rewards) mean += r;
  mean /= n;
  Scalar var = 0;
  for (Scalar r : rewards) var += (r - mean) * (r - mean);
  var /= n;  // population variance
  const Scalar denom = std::max(std::sqrt(var), 1e-8);
  std::vector<Scalar> out(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / denom;
  return out;
}

void fill_advantages(ResponseGroup& g) {
  std::vector<Scalar> rewards;
  rewards.reserve(g.candidates.size());
  for (const auto& [y, r] : g.candidates) rewards.push_back(r);
  g.advantages = group_advantages(rewards);
}

LossResult grpo_loss(const Params& params, const std::vector<ResponseGroup>& groups) {
  if (groups.empty()) throw ArgumentError("grpo_loss: empty group list");
  LossResult res;
  res.grad = Grads::zeros_like(params);
  for (const ResponseGroup& g : groups) {
    if (g.advantages.size() != g.candidates.size())
      throw StateError("grpo_loss: advantages not filled");
    for (std::size_t i = 0; i < g.candidates.size(); ++i) {
      const Scalar a = g.advantages[i];
      if (a == 0.0) continue;
      Grads gi = Grads::zeros_like(params);
      const Scalar lp = model::sequence_logprob_grad(params, g.x, g.candidates[i].first, gi);
      res.loss -= a * lp;
      res.grad.add_scaled(gi, -a);
    }
  }
  const Scalar inv = 1.0 / static_cast<Scalar>(groups.size());
  res.loss *= inv;
  res.grad.scale(inv);
  return res;
}

Scalar kl_to_reference(const Params& params, const Params& reference,
                       const std::vector<PromptEncoding>& prompts, int probe_len) {
  if (prompts.empty()) throw ArgumentError("kl_to_reference: no prompts");
  if (reference.config != params.config)
    throw ConfigError("kl_to_reference: reference shape mismatch");
  if (probe_len < 1) throw ArgumentError("kl_to_reference: probe_len must be >= 1");

  model::DecodingConfig greedy;
  greedy.strategy = model::DecodeStrategy::greedy;
  greedy.max_len = probe_len;

  Scalar total = 0;
  long positions = 0;
  for (const PromptEncoding& x : prompts) {
    const TokenSeq cont = model::decode(reference, x, greedy);
    TokenSeq prefix;
    for (std::size_t t = 0; t < cont.size(); ++t) {
      const Vec ls_p = model::log_softmax(model::forward_logits(params, x, prefix));
      const Vec ls_r = model::log_softmax(model::forward_logits(reference, x, prefix));
      total += (ls_p.array().exp() * (ls_p - ls_r).array()).sum();
      ++positions;
      prefix.push_back(cont[t]);
    }
  }
  return total / static_cast<Scalar>(positions);
}

}  // namespace groundloom::objectives
