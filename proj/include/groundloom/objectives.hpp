#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "groundloom/model.hpp"

namespace groundloom::objectives {

using model::Grads;
using model::Params;
using model::PromptEncoding;

struct PreferencePair {
  PromptEncoding x;
  TokenSeq y_plus;
  TokenSeq y_minus;
};

struct ResponseGroup {
  PromptEncoding x;
  std::vector<std::pair<TokenSeq, Scalar>> candidates;  // (response, reward)
  std::vector<Scalar> advantages;                       // filled by fill_advantages
};

struct DpoConfig {
  Scalar beta_dpo = 0.1;
  const Params* reference = nullptr;  // frozen theta_1, never mutated here
};

struct LossResult {
  Scalar loss = 0;
  Grads grad;
};

struct DpoResult {
  Scalar loss = 0;
  Grads grad;
  Scalar mean_margin = 0;      // mean of logp(y+) - logp(y-) under params
  Scalar frac_preferred = 0;   // fraction of pairs with positive margin
};

// Mean over the batch of -sequence_logprob, with its gradient.
LossResult ce_loss(const Params& params,
                   const std::vector<std::pair<PromptEncoding, TokenSeq>>& batch);

// Reference-anchored pairwise preference loss:
//   mean over pairs of -log sigmoid(beta * [(lp+ - lr+) - (lp- - lr-)]).
// Reference logprobs contribute no gradient. ref_logprobs, when provided,
// caches (lr+, lr-) per pair and skips the reference forward passes.
DpoResult dpo_loss(const Params& params, const DpoConfig& cfg,
                   const std::vector<PreferencePair>& pairs,
                   const std::vector<std::pair<Scalar, Scalar>>* ref_logprobs = nullptr);

// (r_i - mean) / max(population std, 1e-8)
std::vector<Scalar> group_advantages(const std::vector<Scalar>& rewards);
void fill_advantages(ResponseGroup& g);

// Mean over groups of -sum_i A_i * logprob(y_i).
LossResult grpo_loss(const Params& params, const std::vector<ResponseGroup>& groups);

// Mean over prompts and the first probe_len positions of the reference's
// greedy continuation of full-vocabulary KL(p_theta || p_ref). Always >= 0.
Scalar kl_to_reference(const Params& params, const Params& reference,
                       const std::vector<PromptEncoding>& prompts, int probe_len);

}  // namespace groundloom::objectives
