#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "groundloom/model.hpp"
#include "groundloom/world.hpp"

namespace groundloom::evalhall {

// Seeds with this bit set are reserved for evaluation scenes, keeping them
// disjoint from any training seed by construction.
inline constexpr std::uint64_t kEvalSeedBit = 1ULL << 63;

struct EvalItem {
  int id = 0;
  world::Scene scene;
  world::Question question;
};

struct Stratum {
  world::QuestionKind kind{};
  world::DifficultyTier tier = world::DifficultyTier::easy;
  double fraction = 0;
};

std::vector<Stratum> default_strata();

std::vector<EvalItem> build_evalset(int n, std::uint64_t seed,
                                    const std::vector<Stratum>& strata = default_strata());

// A policy maps an eval item to a response; the model-backed policy derives a
// per-item decode seed from (cfg.seed, item.id). The returned closure holds a
// reference to params, which must outlive it.
using Policy = std::function<TokenSeq(const EvalItem&)>;
Policy model_policy(const model::Params& params, const model::DecodingConfig& cfg);

struct KindMetrics {
  int n = 0;
  double hallucination_rate = 0;
  double grounded_rate = 0;
  double abstention_rate = 0;
};

struct MetricsReport {
  int n = 0;
  double hallucination_rate = 0;     // grounded=false and abstained=false
  double abstention_accuracy = 0;    // correct abstentions on abstain-required items
  double premise_rejection_rate = 0; // on false-premise items
  double mean_validated_claims = 0;  // among grounded responses (detail score)
  std::map<std::string, KindMetrics> per_kind;
};

MetricsReport evaluate_policy(const std::vector<EvalItem>& evalset, const Policy& policy,
                              int threads = 1);
MetricsReport hallucination_rate(const model::Params& params, const std::vector<EvalItem>& evalset,
                                 const model::DecodingConfig& cfg, int threads = 1);

struct PairwiseCounts {
  int a_wins = 0;
  int b_wins = 0;
  int tie = 0;
  int both_wrong = 0;
  int error = 0;

  int total() const { return a_wins + b_wins + tie + both_wrong + error; }
};

struct PairwiseReport {
  PairwiseCounts counts;
  int total = 0;
  double a_wins_pct = 0, b_wins_pct = 0, tie_pct = 0, both_wrong_pct = 0, error_pct = 0;
  double delta_win_rate = 0;  // pct(b) - pct(a), B treated
};

PairwiseCounts pairwise_compare(const Policy& a, const Policy& b,
                                const std::vector<EvalItem>& evalset, int threads = 1);
PairwiseCounts pairwise_compare(const model::Params& a, const model::Params& b,
                                const std::vector<EvalItem>& evalset,
                                const model::DecodingConfig& cfg, int threads = 1);

// Percentages at one decimal (half away from zero); throws ArgumentError when
// counts do not sum to total.
PairwiseReport report_table(const PairwiseCounts& counts, int total);
std::string render_table(const PairwiseReport& report, const std::string& name_a = "model A",
                         const std::string& name_b = "model B");

struct LengthStats {
  int n = 0;
  double mean = 0;
  double median = 0;
  int bin_width = 2;
  std::vector<std::pair<int, int>> bins;  // (bin start, count)
};

LengthStats length_histogram(const std::vector<int>& lengths);
std::string render_histogram(const LengthStats& stats);

struct SweepPoint {
  model::DecodingConfig cfg;
  MetricsReport metrics;
};

struct SweepReport {
  std::vector<SweepPoint> points;
  double spearman_temp_vs_rate = 0;
};

SweepReport decoding_sweep(const model::Params& params, const std::vector<EvalItem>& evalset,
                           const std::vector<model::DecodingConfig>& grid, int threads = 1);
std::string render_sweep(const SweepReport& report);

// Spearman rank correlation with average ranks on ties; 0 when degenerate.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace groundloom::evalhall
