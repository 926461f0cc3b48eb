#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "groundloom/world.hpp"

namespace groundloom::forge {

struct SftSample {
  world::Scene scene;
  world::Question question;
  TokenSeq answer;  // grounded canonical (or expanded), includes <eos>
  world::DifficultyTier tier = world::DifficultyTier::easy;
};

enum class PerturbationTag : std::uint8_t {
  count_off_by_one,
  color_swap,
  material_swap,
  relation_flip,
  category_sibling_swap,
  nonexistent_object_insert,
  fabricated_ocr,
  premise_compliance,
};
inline constexpr int kNumPerturbationTags = 8;
std::string to_string(PerturbationTag t);
PerturbationTag perturbation_tag_from_string(const std::string& s);
// Tags realized as <=2 token substitutions of y+ (the audit set).
bool is_substitution_tag(PerturbationTag t);

struct PreferencePairData {
  world::Scene scene;
  world::Question question;
  TokenSeq y_plus;
  TokenSeq y_minus;
  PerturbationTag tag{};
  int origin_index = -1;  // index into the source D1, -1 for fresh pairs
};

struct Stage1Config {
  world::WorldConfig world;
  // existence, count, color_attr, ocr_read
  std::array<double, 4> kind_mix{0.30, 0.30, 0.25, 0.15};
};

struct TiltConfig {
  double beta = 0.0;
  double cap = 20.0;
  std::optional<double> target_mean;  // when set, beta is solved by bisection
};

struct ForgeConfig {
  double ratio = 0.1;         // |D2| / |D1|
  double fp_fraction = 0.20;  // false-premise share of D2
  int expand_rounds = 2;
  // relation-under-occlusion, compositional count, ambiguous attribute
  std::array<double, 3> family_mix{0.30, 0.35, 0.35};
  bool tilt_enabled = true;
  double tilt_target_factor = 1.2;  // target mean = factor * source mean
  TiltConfig tilt;
};

struct ForgeReport {
  int d1_size = 0;
  int emitted = 0;
  int fp_pairs = 0;
  int drops_augment = 0;
  int drops_perturb = 0;
  int drops_soundness = 0;
  std::map<std::string, int> tag_counts;
  std::map<std::string, int> kind_counts;
  double d1_mean_len = 0;
  double d2_mean_len = 0;
  double solved_beta = 0;
  double tilt_target = 0;
};

// Content length: tokens excluding the trailing <eos>.
int response_length(const TokenSeq& y);

std::vector<SftSample> build_stage1(int n, std::uint64_t seed, const Stage1Config& config = {});

// Structured augmentation: re-poses the sample as a harder variant (one
// seeded family per call); nullopt = unrealizable, caller drops the sample.
std::optional<SftSample> augment(const SftSample& sample, std::uint64_t seed);

// Minimal hallucinated counterpart of y_plus; oracle-rejected by
// construction. Throws ArgumentError when no tag applies to this kind.
std::pair<TokenSeq, PerturbationTag> perturb_negative(const world::Scene& scene,
                                                      const world::Question& question,
                                                      const TokenSeq& y_plus, std::uint64_t seed);

PreferencePairData make_false_premise_pair(const world::Scene& scene, std::uint64_t seed);

// Appends up to `rounds` oracle-validated detail claims about the question's
// objects. Deterministic; result stays grounded.
TokenSeq expand_response(const world::Scene& scene, const world::Question& question,
                         const TokenSeq& y, int rounds);

// w_i = min(exp(beta * (len_i - mu)), cap); solves beta on [0,10] when
// cfg.target_mean is set (capped-weighted mean within 1e-6 of target).
std::vector<double> tilt_weights(const std::vector<int>& lengths, const TiltConfig& cfg);
double solve_tilt_beta(const std::vector<int>& lengths, double target_mean, double cap);
// Largest capped-weighted mean reachable at beta = 10.
double max_tilt_mean(const std::vector<int>& lengths, double cap);

// m multinomial draws with replacement, probabilities proportional to weights.
std::vector<int> resample_indices(const std::vector<double>& weights, int m, std::uint64_t seed);

std::vector<PreferencePairData> build_stage2(const std::vector<SftSample>& d1,
                                             const ForgeConfig& config, std::uint64_t seed,
                                             ForgeReport* report = nullptr);

}  // namespace groundloom::forge
