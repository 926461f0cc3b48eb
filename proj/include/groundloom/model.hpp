#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string_view>

#include "groundloom/types.hpp"
#include "groundloom/world.hpp"

namespace groundloom {

using Scalar = double;
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

namespace model {

struct ModelConfig {
  int vocab_size = Vocab::get().size();
  int dim = 32;
  int max_len = 112;  // worst-case hard-tier prompt (82) + expanded answer
  int max_answer_len = 16;

  void validate() const;  // throws ConfigError
  bool operator==(const ModelConfig&) const = default;
};

// Complete parameter set of the toy autoregressive model: token embedding,
// positional table, one causal self-attention block, a tanh feed-forward and
// the output projection. All tensors are 64-bit.
struct Params {
  ModelConfig config;
  Mat embed;  // V x d
  Mat pos;    // max_len x d
  Mat wq, wk, wv, wo;  // d x d
  Mat w1;     // d x 4d
  Mat w2;     // 4d x d
  Mat wout;   // d x V

  static Params zeros(const ModelConfig& config);
};

// Gradient with respect to every tensor in Params (same shapes).
struct Grads {
  Mat embed, pos, wq, wk, wv, wo, w1, w2, wout;

  static Grads zeros_like(const Params& p);
  void add_scaled(const Grads& other, Scalar scale);
  void scale(Scalar s);
  Scalar squared_norm() const;
};

// Applies fn to each tensor in declared (checkpoint) order.
void for_each_tensor(Params& p, const std::function<void(std::string_view, Mat&)>& fn);
void for_each_tensor(const Params& p, const std::function<void(std::string_view, const Mat&)>& fn);
void for_each_tensor(Grads& g, const std::function<void(std::string_view, Mat&)>& fn);

struct PromptEncoding {
  TokenSeq tokens;  // [lighting][object descriptors..][<sep>][question..][<ans>]
};

Params init_params(const ModelConfig& config, std::uint64_t seed);
PromptEncoding encode_input(const world::Scene& scene, const world::Question& question,
                            const ModelConfig& config = {});

// Sum of per-token log-softmax over the answer positions only.
Scalar sequence_logprob(const Params& params, const PromptEncoding& x, const TokenSeq& y);
// Same value, and accumulates d logprob / d theta into grads.
Scalar sequence_logprob_grad(const Params& params, const PromptEncoding& x, const TokenSeq& y,
                             Grads& grads);
Grads grad_logprob(const Params& params, const PromptEncoding& x, const TokenSeq& y);

// Next-token logits after consuming prompt ++ prefix.
Vec forward_logits(const Params& params, const PromptEncoding& x, const TokenSeq& prefix);

Vec log_softmax(const Vec& logits);
Vec softmax(const Vec& logits);

enum class DecodeStrategy : std::uint8_t { greedy, temperature, top_k, top_p };

struct DecodingConfig {
  DecodeStrategy strategy = DecodeStrategy::greedy;
  Scalar temperature = 1.0;
  int k = 1;
  Scalar p = 1.0;
  std::uint64_t seed = 0;
  int max_len = 16;

  void validate() const;  // throws ConfigError
};

// Generates until <eos> or max_len; the returned sequence keeps the <eos>
// when one was produced. Stochastic strategies are pure functions of seed.
TokenSeq decode(const Params& params, const PromptEncoding& x, const DecodingConfig& cfg);

std::string decode_strategy_name(DecodeStrategy s);
DecodeStrategy decode_strategy_from_string(const std::string& s);

}  // namespace model
}  // namespace groundloom
