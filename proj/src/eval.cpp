#include "groundloom/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <thread>

#include "groundloom/rng.hpp"

namespace groundloom::evalhall {

using world::DifficultyTier;
using world::QuestionKind;

std::vector<Stratum> default_strata() {
  using K = QuestionKind;
  using T = DifficultyTier;
  return {
      {K::existence, T::easy, 0.08},      {K::count, T::easy, 0.10},
      {K::color_attr, T::easy, 0.10},     {K::ocr_read, T::easy, 0.07},
      {K::existence, T::hard, 0.05},      {K::count, T::hard, 0.10},
      {K::color_attr, T::hard, 0.10},     {K::material_attr, T::hard, 0.07},
      {K::spatial_relation, T::hard, 0.10}, {K::ocr_read, T::hard, 0.05},
      {K::false_premise, T::hard, 0.12},  {K::unanswerable_property, T::hard, 0.06},
  };
}

std::vector<EvalItem> build_evalset(int n, std::uint64_t seed,
                                    const std::vector<Stratum>& strata) {
  if (n < 1) throw ArgumentError("build_evalset: n must be >= 1");
  if (strata.empty()) throw ArgumentError("build_evalset: empty strata");
  double total = 0;
  for (const auto& s : strata) {
    if (s.fraction < 0) throw ArgumentError("build_evalset: negative stratum fraction");
    total += s.fraction;
  }
  if (total <= 0) throw ArgumentError("build_evalset: zero strata mass");

  // Largest-remainder rounding so per-stratum counts land within +-1.
  std::vector<int> counts(strata.size(), 0);
  std::vector<std::pair<double, std::size_t>> rema;
  int assigned = 0;
  for (std::size_t i = 0; i < strata.size(); ++i) {
    const double exact = strata[i].fraction / total * n;
    counts[i] = static_cast<int>(exact);
    assigned += counts[i];
    rema.emplace_back(exact - counts[i], i);
  }
  std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (int k = 0; k < n - assigned; ++k) ++counts[rema[static_cast<std::size_t>(k)].second];

  std::vector<EvalItem> out;
  out.reserve(static_cast<std::size_t>(n));
  int id = 0;
  for (std::size_t si = 0; si < strata.size(); ++si) {
    const Stratum& st = strata[si];
    for (int k = 0; k < counts[si]; ++k) {
      // Scene regeneration loop: keep derived seeds until the kind is
      // realizable, so strata counts stay exact.
      for (std::uint64_t attempt = 0;; ++attempt) {
        if (attempt >= 64)
          throw ArgumentError("build_evalset: stratum unrealizable: " + world::to_string(st.kind));
        const std::uint64_t scene_seed =
            mix_seed(seed, si * 131071ULL + static_cast<std::uint64_t>(k), attempt) | kEvalSeedBit;
        EvalItem item;
        item.id = id;
        item.scene = world::generate_scene(scene_seed, st.tier);
        try {
          item.question = world::generate_question(item.scene, st.kind,
                                                   mix_seed(scene_seed, 0xE7A1ULL));
        } catch (const UnrealizableError&) {
          continue;
        }
        out.push_back(std::move(item));
        ++id;
        break;
      }
    }
  }
  return out;
}

Policy model_policy(const model::Params& params, const model::DecodingConfig& cfg) {
  return [&params, cfg](const EvalItem& item) {
    model::DecodingConfig c = cfg;
    c.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(item.id));
    const auto x = model::encode_input(item.scene, item.question, params.config);
    return model::decode(params, x, c);
  };
}

namespace {

// Order-stable parallel map: results land in an index-addressed vector and
// all reductions below run sequentially over it.
template <typename T, typename Fn>
std::vector<T> parallel_map(const std::vector<EvalItem>& items, int threads, Fn fn) {
  std::vector<T> results(items.size());
  threads = std::max(1, threads);
  if (threads == 1) {
    for (std::size_t i = 0; i < items.size(); ++i) results[i] = fn(items[i]);
    return results;
  }
  std::vector<std::thread> pool;
  std::size_t chunk = (items.size() + static_cast<std::size_t>(threads) - 1) /
                      static_cast<std::size_t>(threads);
  for (int t = 0; t < threads; ++t) {
    const std::size_t lo = static_cast<std::size_t>(t) * chunk;
    const std::size_t hi = std::min(items.size(), lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi] {
      for (std::size_t i = lo; i < hi; ++i) results[i] = fn(items[i]);
    });
  }
  for (auto& th : pool) th.join();
  return results;
}

struct Judged {
  TokenSeq response;
  world::GroundingVerdict verdict;
  bool abstain_required = false;
  bool wholly_unparseable = false;
};

Judged judge_item(const EvalItem& item, const TokenSeq& response) {
  Judged j;
  j.response = response;
  j.verdict = world::judge_response(item.scene, item.question, response);
  const auto spec = world::grounded_answers(item.scene, item.question);
  j.abstain_required = spec.requires_abstention;
  const auto parsed = world::parse_claims(response);
  j.wholly_unparseable = parsed.claims.empty();
  return j;
}

}  // namespace

MetricsReport evaluate_policy(const std::vector<EvalItem>& evalset, const Policy& policy,
                              int threads) {
  if (evalset.empty()) throw ArgumentError("evaluate_policy: empty evalset");
  const auto judged = parallel_map<Judged>(
      evalset, threads, [&](const EvalItem& item) { return judge_item(item, policy(item)); });

  MetricsReport rep;
  rep.n = static_cast<int>(evalset.size());
  int halluc = 0, abstain_items = 0, abstain_correct = 0;
  int fp_items = 0, fp_rejected = 0, grounded = 0;
  long claims = 0;
  for (std::size_t i = 0; i < judged.size(); ++i) {
    const auto& j = judged[i];
    const auto kind = world::to_string(evalset[i].question.kind);
    auto& km = rep.per_kind[kind];
    ++km.n;
    const bool hallucinated = !j.verdict.grounded && !j.verdict.abstained;
    if (hallucinated) {
      ++halluc;
      km.hallucination_rate += 1;
    }
    if (j.verdict.grounded) {
      ++grounded;
      km.grounded_rate += 1;
      claims += j.verdict.validated_claims;
    }
    if (j.verdict.abstained) km.abstention_rate += 1;
    if (j.abstain_required) {
      ++abstain_items;
      if (j.verdict.grounded && j.verdict.abstained) ++abstain_correct;
    }
    if (evalset[i].question.kind == QuestionKind::false_premise) {
      ++fp_items;
      if (j.verdict.premise_rejected) ++fp_rejected;
    }
  }
  rep.hallucination_rate = static_cast<double>(halluc) / rep.n;
  rep.abstention_accuracy =
      abstain_items ? static_cast<double>(abstain_correct) / abstain_items : 0.0;
  rep.premise_rejection_rate = fp_items ? static_cast<double>(fp_rejected) / fp_items : 0.0;
  rep.mean_validated_claims = grounded ? static_cast<double>(claims) / grounded : 0.0;
  for (auto& [_, km] : rep.per_kind) {
    km.hallucination_rate /= km.n;
    km.grounded_rate /= km.n;
    km.abstention_rate /= km.n;
  }
  return rep;
}

MetricsReport hallucination_rate(const model::Params& params, const std::vector<EvalItem>& evalset,
                                 const model::DecodingConfig& cfg, int threads) {
  return evaluate_policy(evalset, model_policy(params, cfg), threads);
}

PairwiseCounts pairwise_compare(const Policy& a, const Policy& b,
                                const std::vector<EvalItem>& evalset, int threads) {
  if (evalset.empty()) throw ArgumentError("pairwise_compare: empty evalset");
  struct Verdict2 {
    Judged a, b;
  };
  const auto judged = parallel_map<Verdict2>(evalset, threads, [&](const EvalItem& item) {
    return Verdict2{judge_item(item, a(item)), judge_item(item, b(item))};
  });

  PairwiseCounts counts;
  for (const auto& v : judged) {
    // Judge-infrastructure failure analog: neither side produced anything
    // the grammar could read.
    if (v.a.wholly_unparseable && v.b.wholly_unparseable) {
      ++counts.error;
      continue;
    }
    const bool ga = v.a.verdict.grounded, gb = v.b.verdict.grounded;
    if (!ga && !gb) {
      ++counts.both_wrong;
    } else if (ga && !gb) {
      ++counts.a_wins;
    } else if (!ga && gb) {
      ++counts.b_wins;
    } else {
      if (v.a.verdict.validated_claims > v.b.verdict.validated_claims)
        ++counts.a_wins;
      else if (v.b.verdict.validated_claims > v.a.verdict.validated_claims)
        ++counts.b_wins;
      else
        ++counts.tie;
    }
  }
  return counts;
}

PairwiseCounts pairwise_compare(const model::Params& a, const model::Params& b,
                                const std::vector<EvalItem>& evalset,
                                const model::DecodingConfig& cfg, int threads) {
  if (a.config.vocab_size != b.config.vocab_size)
    throw ConfigError("pairwise_compare: models do not share a vocabulary");
  return pairwise_compare(model_policy(a, cfg), model_policy(b, cfg), evalset, threads);
}

namespace {
double pct1(int count, int total) {
  return std::round(1000.0 * count / total) / 10.0;
}
}  // namespace

PairwiseReport report_table(const PairwiseCounts& counts, int total) {
  if (counts.total() != total) throw ArgumentError("report_table: counts do not sum to total");
  if (total <= 0) throw ArgumentError("report_table: total must be positive");
  PairwiseReport r;
  r.counts = counts;
  r.total = total;
  r.a_wins_pct = pct1(counts.a_wins, total);
  r.b_wins_pct = pct1(counts.b_wins, total);
  r.tie_pct = pct1(counts.tie, total);
  r.both_wrong_pct = pct1(counts.both_wrong, total);
  r.error_pct = pct1(counts.error, total);
  // Delta is computed from the rounded percentages, matching how win-rate
  // tables are usually quoted.
  r.delta_win_rate = std::round((r.b_wins_pct - r.a_wins_pct) * 10.0) / 10.0;
  return r;
}

std::string render_table(const PairwiseReport& r, const std::string& name_a,
                         const std::string& name_b) {
  char buf[128];
  std::ostringstream os;
  os << "category              count    pct\n";
  auto row = [&](const std::string& name, int c, double p) {
    std::snprintf(buf, sizeof buf, "%-20s %6d %5.1f%%\n", name.c_str(), c, p);
    os << buf;
  };
  row(name_a + " wins", r.counts.a_wins, r.a_wins_pct);
  row(name_b + " wins", r.counts.b_wins, r.b_wins_pct);
  row("tie", r.counts.tie, r.tie_pct);
  row("both wrong", r.counts.both_wrong, r.both_wrong_pct);
  row("error", r.counts.error, r.error_pct);
  std::snprintf(buf, sizeof buf, "%-20s %6d\n", "total", r.total);
  os << buf;
  std::snprintf(buf, sizeof buf, "delta win rate       %+6.1f%%\n", r.delta_win_rate);
  os << buf;
  return os.str();
}

LengthStats length_histogram(const std::vector<int>& lengths) {
  if (lengths.empty()) throw ArgumentError("length_histogram: empty input");
  LengthStats st;
  st.n = static_cast<int>(lengths.size());
  std::vector<int> sorted = lengths;
  std::sort(sorted.begin(), sorted.end());
  double sum = 0;
  for (int l : sorted) sum += l;
  st.mean = sum / st.n;
  st.median = (st.n % 2 == 1)
                  ? sorted[static_cast<std::size_t>(st.n / 2)]
                  : 0.5 * (sorted[static_cast<std::size_t>(st.n / 2 - 1)] +
                           sorted[static_cast<std::size_t>(st.n / 2)]);
  std::map<int, int> bins;
  for (int l : sorted) ++bins[(l / st.bin_width) * st.bin_width];
  for (const auto& [start, count] : bins) st.bins.emplace_back(start, count);
  return st;
}

std::string render_histogram(const LengthStats& st) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "n=%d mean=%.2f median=%.1f (bin width %d)\n", st.n, st.mean,
                st.median, st.bin_width);
  os << buf;
  int max_count = 1;
  for (const auto& [_, c] : st.bins) max_count = std::max(max_count, c);
  for (const auto& [start, count] : st.bins) {
    const int bar = (count * 50 + max_count - 1) / max_count;
    std::snprintf(buf, sizeof buf, "%3d-%-3d %6d ", start, start + st.bin_width - 1, count);
    os << buf << std::string(static_cast<std::size_t>(bar), '#') << "\n";
  }
  return os.str();
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) return 0.0;
  auto ranks = [](const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= rx.size();
  my /= ry.size();
  double num = 0, dx = 0, dy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    num += (rx[i] - mx) * (ry[i] - my);
    dx += (rx[i] - mx) * (rx[i] - mx);
    dy += (ry[i] - my) * (ry[i] - my);
  }
  if (dx == 0 || dy == 0) return 0.0;
  return num / std::sqrt(dx * dy);
}

SweepReport decoding_sweep(const model::Params& params, const std::vector<EvalItem>& evalset,
                           const std::vector<model::DecodingConfig>& grid, int threads) {
  if (grid.empty()) throw ArgumentError("decoding_sweep: empty grid");
  SweepReport rep;
  std::vector<double> temps, rates;
  for (const auto& cfg : grid) {
    SweepPoint pt;
    pt.cfg = cfg;
    pt.metrics = hallucination_rate(params, evalset, cfg, threads);
    if (cfg.strategy == model::DecodeStrategy::temperature ||
        cfg.strategy == model::DecodeStrategy::top_p ||
        cfg.strategy == model::DecodeStrategy::top_k) {
      temps.push_back(cfg.temperature);
      rates.push_back(pt.metrics.hallucination_rate);
    }
    rep.points.push_back(std::move(pt));
  }
  rep.spearman_temp_vs_rate = spearman(temps, rates);
  return rep;
}

std::string render_sweep(const SweepReport& rep) {
  std::ostringstream os;
  char buf[160];
  os << "strategy  temp      k      p   halluc  abstain_acc  detail\n";
  for (const auto& pt : rep.points) {
    std::snprintf(buf, sizeof buf, "%-8s %5.2f %6d %6.2f   %6.4f       %6.4f  %6.3f\n",
                  model::decode_strategy_name(pt.cfg.strategy).c_str(), pt.cfg.temperature,
                  pt.cfg.k, pt.cfg.p, pt.metrics.hallucination_rate,
                  pt.metrics.abstention_accuracy, pt.metrics.mean_validated_claims);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "spearman(temperature, hallucination rate) = %.4f\n",
                rep.spearman_temp_vs_rate);
  os << buf;
  return os.str();
}

}  // namespace groundloom::evalhall
