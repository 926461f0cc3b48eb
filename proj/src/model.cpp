#include "groundloom/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "groundloom/rng.hpp"

namespace groundloom::model {

void ModelConfig::validate() const {
  if (vocab_size < Vocab::get().size())
    throw ConfigError("vocab_size smaller than answer vocabulary");
  if (dim < 8) throw ConfigError("model dim must be >= 8");
  if (max_len < 8) throw ConfigError("max_len too small");
  if (max_answer_len < 2 || max_answer_len >= max_len)
    throw ConfigError("max_answer_len out of range");
}

Params Params::zeros(const ModelConfig& config) {
  config.validate();
  Params p;
  p.config = config;
  const int V = config.vocab_size, d = config.dim, L = config.max_len;
  p.embed = Mat::Zero(V, d);
  p.pos = Mat::Zero(L, d);
  p.wq = Mat::Zero(d, d);
  p.wk = Mat::Zero(d, d);
  p.wv = Mat::Zero(d, d);
  p.wo = Mat::Zero(d, d);
  p.w1 = Mat::Zero(d, 4 * d);
  p.w2 = Mat::Zero(4 * d, d);
  p.wout = Mat::Zero(d, V);
  return p;
}

Grads Grads::zeros_like(const Params& p) {
  Grads g;
  g.embed = Mat::Zero(p.embed.rows(), p.embed.cols());
  g.pos = Mat::Zero(p.pos.rows(), p.pos.cols());
  g.wq = Mat::Zero(p.wq.rows(), p.wq.cols());
  g.wk = Mat::Zero(p.wk.rows(), p.wk.cols());
  g.wv = Mat::Zero(p.wv.rows(), p.wv.cols());
  g.wo = Mat::Zero(p.wo.rows(), p.wo.cols());
  g.w1 = Mat::Zero(p.w1.rows(), p.w1.cols());
  g.w2 = Mat::Zero(p.w2.rows(), p.w2.cols());
  g.wout = Mat::Zero(p.wout.rows(), p.wout.cols());
  return g;
}

void Grads::add_scaled(const Grads& o, Scalar s) {
  embed += s * o.embed;
  pos += s * o.pos;
  wq += s * o.wq;
  wk += s * o.wk;
  wv += s * o.wv;
  wo += s * o.wo;
  w1 += s * o.w1;
  w2 += s * o.w2;
  wout += s * o.wout;
}

void Grads::scale(Scalar s) {
  embed *= s;
  pos *= s;
  wq *= s;
  wk *= s;
  wv *= s;
  wo *= s;
  w1 *= s;
  w2 *= s;
  wout *= s;
}

Scalar Grads::squared_norm() const {
  return embed.squaredNorm() + pos.squaredNorm() + wq.squaredNorm() + wk.squaredNorm() +
         wv.squaredNorm() + wo.squaredNorm() + w1.squaredNorm() + w2.squaredNorm() +
         wout.squaredNorm();
}

void for_each_tensor(Params& p, const std::function<void(std::string_view, Mat&)>& fn) {
  fn("embed", p.embed);
  fn("pos", p.pos);
  fn("wq", p.wq);
  fn("wk", p.wk);
  fn("wv", p.wv);
  fn("wo", p.wo);
  fn("w1", p.w1);
  fn("w2", p.w2);
  fn("wout", p.wout);
}

void for_each_tensor(const Params& p, const std::function<void(std::string_view, const Mat&)>& fn) {
  fn("embed", p.embed);
  fn("pos", p.pos);
  fn("wq", p.wq);
  fn("wk", p.wk);
  fn("wv", p.wv);
  fn("wo", p.wo);
  fn("w1", p.w1);
  fn("w2", p.w2);
  fn("wout", p.wout);
}

void for_each_tensor(Grads& g, const std::function<void(std::string_view, Mat&)>& fn) {
  fn("embed", g.embed);
  fn("pos", g.pos);
  fn("wq", g.wq);
  fn("wk", g.wk);
  fn("wv", g.wv);
  fn("wo", g.wo);
  fn("w1", g.w1);
  fn("w2", g.w2);
  fn("wout", g.wout);
}

Params init_params(const ModelConfig& config, std::uint64_t seed) {
  Params p = Params::zeros(config);
  Rng rng(mix_seed(seed, 0x1417ULL));
  // Scaled uniform init; fill order is fixed (tensor order, then row-major)
  // so identical seeds give identical parameters.
  for_each_tensor(p, [&](std::string_view name, Mat& m) {
    const Scalar scale =
        (name == "embed" || name == "pos") ? 0.1 : 1.0 / std::sqrt(static_cast<Scalar>(m.rows()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = (2.0 * rng.uniform() - 1.0) * scale;
  });
  return p;
}

// ---------------------------------------------------------------------------
// Prompt encoding
// ---------------------------------------------------------------------------

PromptEncoding encode_input(const world::Scene& scene, const world::Question& question,
                            const ModelConfig& config) {
  config.validate();
  const TokenIds& T = tok();
  PromptEncoding enc;
  TokenSeq& t = enc.tokens;
  t.push_back(scene.lighting == world::Lighting::bright ? T.bright : T.dim);

  // Fixed-width attribute slots per object; unobservable slots read unk so
  // the prompt carries exactly the evidence a viewer would have. Hidden
  // objects collapse to a single masked descriptor.
  for (const auto& o : scene.objects) {
    if (o.occlusion == world::Occlusion::hidden) {
      t.push_back(T.hidden);
      continue;
    }
    t.push_back(T.obj);
    t.push_back(T.category[static_cast<int>(o.category)]);
    t.push_back(world::color_observable(scene, o) ? T.color[static_cast<int>(o.color)] : T.unk);
    t.push_back(T.size[static_cast<int>(o.size)]);
    t.push_back(world::material_observable(scene, o)
                    ? T.material[static_cast<int>(o.material)]
                    : T.unk);
    t.push_back(T.pos_col[o.col]);
    t.push_back(T.pos_row[o.row]);
    if (o.label && o.occlusion == world::Occlusion::visible) {
      t.push_back(T.label);
      for (std::size_t c = 0; c < o.label->text.size(); ++c) {
        if (o.label->legible_mask & (1u << c)) {
          const auto idx = ocr_alphabet().find(o.label->text[c]);
          t.push_back(T.ocr[idx]);
        } else {
          t.push_back(T.unk);
        }
      }
    }
  }

  t.push_back(T.sep);
  t.insert(t.end(), question.tokens.begin(), question.tokens.end());
  t.push_back(T.ans);

  if (static_cast<int>(t.size()) + config.max_answer_len > config.max_len)
    throw LengthError("prompt too long for context window");
  return enc;
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

namespace {

struct ForwardCache {
  TokenSeq ids;
  Mat x;       // L x d   embeddings + positions
  Mat q, k, v; // L x d
  Mat att;     // L x L   row-softmax, causal
  Mat ctx;     // L x d   att * v
  Mat h;       // L x d   x + ctx * wo
  Mat u;       // L x f   tanh(h * w1)
  Mat z;       // L x d   h + u * w2
  Mat logits;  // L x V
};

ForwardCache forward(const Params& p, const TokenSeq& ids) {
  const int L = static_cast<int>(ids.size());
  const int d = p.config.dim;
  if (L > p.config.max_len) throw LengthError("sequence exceeds max_len");

  ForwardCache f;
  f.ids = ids;
  f.x.resize(L, d);
  for (int i = 0; i < L; ++i) f.x.row(i) = p.embed.row(ids[static_cast<std::size_t>(i)]) + p.pos.row(i);

  f.q = f.x * p.wq;
  f.k = f.x * p.wk;
  f.v = f.x * p.wv;

  const Scalar inv_sqrt_d = 1.0 / std::sqrt(static_cast<Scalar>(d));
  f.att = Mat::Zero(L, L);
  for (int i = 0; i < L; ++i) {
    Scalar row_max = -std::numeric_limits<Scalar>::infinity();
    for (int j = 0; j <= i; ++j) {
      f.att(i, j) = f.q.row(i).dot(f.k.row(j)) * inv_sqrt_d;
      row_max = std::max(row_max, f.att(i, j));
    }
    Scalar denom = 0;
    for (int j = 0; j <= i; ++j) {
      f.att(i, j) = std::exp(f.att(i, j) - row_max);
      denom += f.att(i, j);
    }
    for (int j = 0; j <= i; ++j) f.att(i, j) /= denom;
  }

  f.ctx = f.att * f.v;
  f.h = f.x + f.ctx * p.wo;
  f.u = (f.h * p.w1).array().tanh();
  f.z = f.h + f.u * p.w2;
  f.logits = f.z * p.wout;
  return f;
}

// dlogits -> grads (accumulated). Standard reverse pass of forward() above.
void backward(const Params& p, const ForwardCache& f, const Mat& dlogits, Grads& g) {
  const int L = static_cast<int>(f.ids.size());
  const Scalar inv_sqrt_d = 1.0 / std::sqrt(static_cast<Scalar>(p.config.dim));

  g.wout += f.z.transpose() * dlogits;
  Mat dz = dlogits * p.wout.transpose();

  Mat dh = dz;
  g.w2 += f.u.transpose() * dz;
  Mat du = dz * p.w2.transpose();
  Mat dpre = du.array() * (1.0 - f.u.array().square());
  g.w1 += f.h.transpose() * dpre;
  dh += dpre * p.w1.transpose();

  Mat dx = dh;
  g.wo += f.ctx.transpose() * dh;
  Mat dctx = dh * p.wo.transpose();

  Mat datt = dctx * f.v.transpose();
  Mat dv = f.att.transpose() * dctx;

  Mat ds = Mat::Zero(L, L);
  for (int i = 0; i < L; ++i) {
    Scalar dot = 0;
    for (int j = 0; j <= i; ++j) dot += datt(i, j) * f.att(i, j);
    for (int j = 0; j <= i; ++j) ds(i, j) = (datt(i, j) - dot) * f.att(i, j);
  }

  Mat dq = ds * f.k * inv_sqrt_d;
  Mat dk = ds.transpose() * f.q * inv_sqrt_d;

  g.wq += f.x.transpose() * dq;
  g.wk += f.x.transpose() * dk;
  g.wv += f.x.transpose() * dv;
  dx += dq * p.wq.transpose() + dk * p.wk.transpose() + dv * p.wv.transpose();

  for (int i = 0; i < L; ++i) {
    g.embed.row(f.ids[static_cast<std::size_t>(i)]) += dx.row(i);
    g.pos.row(i) += dx.row(i);
  }
}

TokenSeq concat(const PromptEncoding& x, const TokenSeq& y, std::size_t take_y) {
  TokenSeq ids = x.tokens;
  ids.insert(ids.end(), y.begin(), y.begin() + static_cast<std::ptrdiff_t>(take_y));
  return ids;
}

void check_tokens(const TokenSeq& y, int vocab_size) {
  if (y.empty()) throw ArgumentError("empty response");
  for (TokenId t : y)
    if (t < 0 || t >= vocab_size) throw ArgumentError("token outside vocabulary");
}

}  // namespace

Vec log_softmax(const Vec& logits) {
  const Scalar m = logits.maxCoeff();
  const Vec shifted = logits.array() - m;
  const Scalar lse = std::log(shifted.array().exp().sum());
  return shifted.array() - lse;
}

Vec softmax(const Vec& logits) {
  const Vec ls = log_softmax(logits);
  return ls.array().exp();
}

Scalar sequence_logprob(const Params& params, const PromptEncoding& x, const TokenSeq& y) {
  check_tokens(y, params.config.vocab_size);
  const std::size_t plen = x.tokens.size();
  // The final answer token is never an input; predictions for y[t] come from
  // the row holding the previous token.
  const ForwardCache f = forward(params, concat(x, y, y.size() - 1));
  Scalar total = 0;
  for (std::size_t t = 0; t < y.size(); ++t) {
    const Vec ls = log_softmax(f.logits.row(static_cast<Eigen::Index>(plen - 1 + t)).transpose());
    total += ls(y[t]);
  }
  return total;
}

Scalar sequence_logprob_grad(const Params& params, const PromptEncoding& x, const TokenSeq& y,
                             Grads& grads) {
  check_tokens(y, params.config.vocab_size);
  const std::size_t plen = x.tokens.size();
  const ForwardCache f = forward(params, concat(x, y, y.size() - 1));
  const int L = static_cast<int>(f.ids.size());
  Mat dlogits = Mat::Zero(L, params.config.vocab_size);
  Scalar total = 0;
  for (std::size_t t = 0; t < y.size(); ++t) {
    const int row = static_cast<int>(plen - 1 + t);
    const Vec ls = log_softmax(f.logits.row(row).transpose());
    total += ls(y[t]);
    // d logprob / d logits = onehot(y_t) - softmax
    dlogits.row(row) -= ls.array().exp().matrix().transpose();
    dlogits(row, y[t]) += 1.0;
  }
  backward(params, f, dlogits, grads);
  return total;
}

Grads grad_logprob(const Params& params, const PromptEncoding& x, const TokenSeq& y) {
  Grads g = Grads::zeros_like(params);
  sequence_logprob_grad(params, x, y, g);
  return g;
}

Vec forward_logits(const Params& params, const PromptEncoding& x, const TokenSeq& prefix) {
  for (TokenId t : prefix)
    if (t < 0 || t >= params.config.vocab_size) throw ArgumentError("token outside vocabulary");
  const ForwardCache f = forward(params, concat(x, prefix, prefix.size()));
  return f.logits.row(f.logits.rows() - 1).transpose();
}

// ---------------------------------------------------------------------------
// Decoding
// ---------------------------------------------------------------------------

void DecodingConfig::validate() const {
  if (temperature <= 0) throw ConfigError("temperature must be > 0");
  if (k < 1) throw ConfigError("top-k needs k >= 1");
  if (p <= 0 || p > 1.0) throw ConfigError("top-p needs p in (0,1]");
  if (max_len < 1) throw ConfigError("max_len must be >= 1");
}

TokenSeq decode(const Params& params, const PromptEncoding& x, const DecodingConfig& cfg) {
  cfg.validate();
  Rng rng(mix_seed(cfg.seed, 0xDEC0DEULL));
  const int V = params.config.vocab_size;
  TokenSeq out;

  for (int step = 0; step < cfg.max_len; ++step) {
    Vec logits = forward_logits(params, x, out);

    TokenId next = 0;
    if (cfg.strategy == DecodeStrategy::greedy) {
      Scalar best = logits(0);
      for (int i = 1; i < V; ++i)
        if (logits(i) > best) {
          best = logits(i);
          next = i;
        }
    } else {
      const Vec probs = softmax(logits / cfg.temperature);
      // Sort descending by probability, index ascending on ties, so the
      // nucleus/top-k cut is reproducible.
      std::vector<int> order(static_cast<std::size_t>(V));
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (probs(a) != probs(b)) return probs(a) > probs(b);
        return a < b;
      });
      int keep = V;
      if (cfg.strategy == DecodeStrategy::top_k) {
        keep = std::min(cfg.k, V);
      } else if (cfg.strategy == DecodeStrategy::top_p) {
        Scalar cum = 0;
        keep = 0;
        while (keep < V && cum < cfg.p) cum += probs(order[static_cast<std::size_t>(keep++)]);
      }
      Scalar mass = 0;
      for (int i = 0; i < keep; ++i) mass += probs(order[static_cast<std::size_t>(i)]);
      const Scalar u = rng.uniform() * mass;
      Scalar acc = 0;
      next = order[static_cast<std::size_t>(keep - 1)];
      for (int i = 0; i < keep; ++i) {
        acc += probs(order[static_cast<std::size_t>(i)]);
        if (u < acc) {
          next = order[static_cast<std::size_t>(i)];
          break;
        }
      }
    }

    out.push_back(next);
    if (next == tok().eos) break;
  }
  return out;
}

std::string decode_strategy_name(DecodeStrategy s) {
  switch (s) {
    case DecodeStrategy::greedy: return "greedy";
    case DecodeStrategy::temperature: return "temp";
    case DecodeStrategy::top_k: return "topk";
    case DecodeStrategy::top_p: return "topp";
  }
  return "greedy";
}

DecodeStrategy decode_strategy_from_string(const std::string& s) {
  if (s == "greedy") return DecodeStrategy::greedy;
  if (s == "temp" || s == "temperature") return DecodeStrategy::temperature;
  if (s == "topk" || s == "top_k") return DecodeStrategy::top_k;
  if (s == "topp" || s == "top_p" || s == "nucleus") return DecodeStrategy::top_p;
  throw ArgumentError("unknown decoding strategy: " + s);
}

}  // namespace groundloom::model
