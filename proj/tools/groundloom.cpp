// groundloom: reproducible grounded-VQA microworld experiments.
//
// Subcommands: gen-data | forge | train | eval | report. Every command that
// writes artifacts also writes a <out>.run.json manifest with seeds and
// checksums; re-running with the same flags reproduces identical bytes.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "groundloom/eval.hpp"
#include "groundloom/forge.hpp"
#include "groundloom/manifest.hpp"
#include "groundloom/serialize.hpp"
#include "groundloom/train.hpp"

using namespace groundloom;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitData = 1;
constexpr int kExitUsage = 2;
constexpr int kExitGate = 3;

std::vector<double> parse_double_list(const std::string& csv) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos < csv.size()) {
    std::size_t next = csv.find(',', pos);
    if (next == std::string::npos) next = csv.size();
    out.push_back(std::stod(csv.substr(pos, next - pos)));
    pos = next + 1;
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> out;
  for (double v : parse_double_list(csv)) out.push_back(static_cast<int>(v));
  return out;
}

struct GenDataArgs {
  int n = 1000;
  std::uint64_t seed = 0;
  std::string out;
  std::string vocab_out;
  bool eval_mode = false;
};

int cmd_gen_data(const GenDataArgs& a) {
  io::RunManifest manifest;
  manifest.command = a.eval_mode ? "gen-data --eval" : "gen-data";
  manifest.seeds = {a.seed};
  manifest.config = {{"n", a.n}, {"seed", a.seed}, {"eval", a.eval_mode}};

  if (a.eval_mode) {
    const auto items = evalhall::build_evalset(a.n, a.seed);
    io::write_evalset(a.out, items);
    std::cout << "wrote " << items.size() << " eval items to " << a.out << "\n";
  } else {
    const auto d1 = forge::build_stage1(a.n, a.seed);
    io::write_d1(a.out, d1);
    std::cout << "wrote " << d1.size() << " stage-1 samples to " << a.out << "\n";
  }
  manifest.add_output(a.out);
  if (!a.vocab_out.empty()) {
    io::write_vocab_manifest(a.vocab_out);
    manifest.add_output(a.vocab_out);
  }
  manifest.write(a.out + ".run.json");
  return kExitOk;
}

struct ForgeArgs {
  std::string d1;
  std::string out;
  std::string report;
  std::uint64_t seed = 0;
  forge::ForgeConfig cfg;
  double tilt_target_mean = 0;  // 0 = auto
};

int cmd_forge(const ForgeArgs& a) {
  auto d1 = io::read_d1(a.d1);
  forge::ForgeConfig cfg = a.cfg;
  if (a.tilt_target_mean > 0) cfg.tilt.target_mean = a.tilt_target_mean;

  forge::ForgeReport rep;
  const auto d2 = forge::build_stage2(d1, cfg, a.seed, &rep);
  io::write_d2(a.out, d2);

  io::RunManifest manifest;
  manifest.command = "forge";
  manifest.seeds = {a.seed};
  manifest.config = {{"ratio", cfg.ratio},
                     {"fp_fraction", cfg.fp_fraction},
                     {"expand_rounds", cfg.expand_rounds},
                     {"tilt_enabled", cfg.tilt_enabled},
                     {"tilt_cap", cfg.tilt.cap},
                     {"seed", a.seed}};
  manifest.add_input(a.d1);
  manifest.add_output(a.out);

  std::cout << "emitted " << rep.emitted << " pairs (" << rep.fp_pairs << " false-premise), "
            << "drops: augment=" << rep.drops_augment << " perturb=" << rep.drops_perturb
            << " soundness=" << rep.drops_soundness << "\n"
            << "mean length: d1=" << rep.d1_mean_len << " d2=" << rep.d2_mean_len
            << " (tilt beta=" << rep.solved_beta << ")\n";
  if (!a.report.empty()) {
    io::write_text(a.report, io::to_json(rep).dump(2) + "\n");
    manifest.add_output(a.report);
  }
  manifest.write(a.out + ".run.json");
  return kExitOk;
}

struct TrainArgs {
  std::string stage = "sft";
  std::string d1, d2, ref;
  std::string out, log;
  train::TrainConfig cfg;
  std::string optimizer = "adam";
  bool lr_set = false;
  bool epochs_set = false;
};

int cmd_train(TrainArgs& a) {
  a.cfg.optimizer =
      a.optimizer == "sgd" ? train::OptimizerKind::sgd : train::OptimizerKind::adam;
  train::LogSink sink;
  if (!a.log.empty()) sink = train::jsonl_log_sink(a.log);

  io::RunManifest manifest;
  manifest.command = "train --stage " + a.stage;
  manifest.seeds = {a.cfg.seed};

  model::Params result = model::Params::zeros({});
  if (a.stage == "sft") {
    if (a.d1.empty()) throw ArgumentError("train --stage sft requires --d1");
    a.cfg.stage = train::Stage::sft;
    if (!a.epochs_set) a.cfg.epochs = 4;
    if (!a.lr_set) a.cfg.learning_rate = 3e-3;
    const auto d1 = io::read_d1(a.d1);
    manifest.add_input(a.d1);
    result = train::train_sft(d1, a.cfg, model::init_params({}, a.cfg.seed), sink);
  } else if (a.stage == "dpo") {
    if (a.d2.empty() || a.ref.empty())
      throw ArgumentError("train --stage dpo requires --d2 and --ref");
    a.cfg.stage = train::Stage::dpo;
    if (!a.epochs_set) a.cfg.epochs = 6;
    if (!a.lr_set) a.cfg.learning_rate = 1e-3;
    const auto d2 = io::read_d2(a.d2);
    const auto theta1 = train::load_checkpoint(a.ref);
    manifest.add_input(a.d2);
    manifest.add_input(a.ref);
    result = train::train_dpo(theta1, d2, a.cfg, sink);
  } else {
    throw ArgumentError("unknown stage: " + a.stage);
  }

  train::save_checkpoint(result, a.out);
  manifest.config = {{"stage", a.stage},
                     {"epochs", a.cfg.epochs},
                     {"batch_size", a.cfg.batch_size},
                     {"learning_rate", a.cfg.learning_rate},
                     {"optimizer", a.optimizer},
                     {"beta_dpo", a.cfg.beta_dpo},
                     {"kl_bound", a.cfg.kl_bound},
                     {"seed", a.cfg.seed}};
  manifest.add_output(a.out);
  if (!a.log.empty()) manifest.outputs.emplace_back(a.log, "-");  // log carries wall times
  manifest.write(a.out + ".run.json");
  std::cout << "checkpoint written to " << a.out << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string ckpt;
  std::vector<std::string> compare;
  std::string evalset;
  std::string out;
  std::string gate;
  std::string decoding = "greedy";
  double temperature = 1.0;
  int k = 1;
  double p = 1.0;
  std::string sweep_temps;
  std::uint64_t seed = 0;
  int threads = 1;
};

model::DecodingConfig decoding_from(const EvalArgs& a) {
  model::DecodingConfig cfg;
  cfg.strategy = model::decode_strategy_from_string(a.decoding);
  cfg.temperature = a.temperature;
  cfg.k = a.k;
  cfg.p = a.p;
  cfg.seed = a.seed;
  cfg.validate();
  return cfg;
}

int gate_table2() {
  struct Fixture {
    evalhall::PairwiseCounts counts;
    int total;
    double delta;
  };
  const Fixture fixtures[] = {{{207, 276, 294, 49, 13}, 839, 8.2},
                              {{256, 316, 221, 20, 26}, 839, 7.2}};
  bool ok = true;
  for (const auto& f : fixtures) {
    const auto rep = evalhall::report_table(f.counts, f.total);
    const bool pass = rep.delta_win_rate == f.delta;
    ok = ok && pass;
    std::printf("[%s] table2 fixture delta %.1f\n", pass ? "PASS" : "FAIL", f.delta);
  }
  return ok ? kExitOk : kExitGate;
}

int gate_stagewise(const EvalArgs& a) {
  if (a.compare.size() != 2 || a.evalset.empty())
    throw ArgumentError("--gate stagewise needs --compare A B and --evalset");
  const auto items = io::read_evalset(a.evalset);
  const auto theta1 = train::load_checkpoint(a.compare[0]);
  const auto theta2 = train::load_checkpoint(a.compare[1]);
  const auto cfg = decoding_from(a);

  const auto m1 = evalhall::hallucination_rate(theta1, items, cfg, a.threads);
  const auto m2 = evalhall::hallucination_rate(theta2, items, cfg, a.threads);
  const auto counts = evalhall::pairwise_compare(theta1, theta2, items, cfg, a.threads);
  const auto table = evalhall::report_table(counts, counts.total());

  bool ok = true;
  auto check = [&](bool pass, const std::string& what) {
    ok = ok && pass;
    std::printf("[%s] %s\n", pass ? "PASS" : "FAIL", what.c_str());
  };
  char buf[256];
  std::snprintf(buf, sizeof buf, "hallucination rate drops >= 20%% relative (%.4f -> %.4f)",
                m1.hallucination_rate, m2.hallucination_rate);
  check(m2.hallucination_rate <= 0.8 * m1.hallucination_rate, buf);
  std::snprintf(buf, sizeof buf, "win rate beats loss rate by >= 5 points (delta %.1f)",
                table.delta_win_rate);
  check(table.delta_win_rate >= 5.0, buf);
  std::snprintf(buf, sizeof buf, "premise rejection strictly increases (%.4f -> %.4f)",
                m1.premise_rejection_rate, m2.premise_rejection_rate);
  check(m2.premise_rejection_rate > m1.premise_rejection_rate, buf);
  std::snprintf(buf, sizeof buf, "detail score does not regress (%.3f -> %.3f)",
                m1.mean_validated_claims, m2.mean_validated_claims);
  check(m2.mean_validated_claims >= m1.mean_validated_claims, buf);

  std::cout << evalhall::render_table(table, "stage-1", "stage-2");
  return ok ? kExitOk : kExitGate;
}

int cmd_eval(const EvalArgs& a) {
  if (!a.gate.empty()) {
    if (a.gate == "table2") return gate_table2();
    if (a.gate == "stagewise") return gate_stagewise(a);
    throw ArgumentError("unknown gate suite: " + a.gate);
  }
  if (a.evalset.empty()) throw ArgumentError("eval requires --evalset");
  const auto items = io::read_evalset(a.evalset);

  io::RunManifest manifest;
  manifest.command = "eval";
  manifest.seeds = {a.seed};
  manifest.config = {{"decoding", a.decoding}, {"temperature", a.temperature},
                     {"k", a.k},               {"p", a.p},
                     {"seed", a.seed},         {"threads", a.threads}};
  manifest.add_input(a.evalset);

  if (a.compare.size() == 2) {
    const auto pa = train::load_checkpoint(a.compare[0]);
    const auto pb = train::load_checkpoint(a.compare[1]);
    manifest.add_input(a.compare[0]);
    manifest.add_input(a.compare[1]);
    const auto counts = evalhall::pairwise_compare(pa, pb, items, decoding_from(a), a.threads);
    const auto rep = evalhall::report_table(counts, counts.total());
    std::cout << evalhall::render_table(rep);
    if (!a.out.empty()) {
      io::write_text(a.out, io::to_json(rep).dump(2) + "\n");
      manifest.add_output(a.out);
      manifest.write(a.out + ".run.json");
    }
    return kExitOk;
  }

  if (a.ckpt.empty()) throw ArgumentError("eval requires --ckpt or --compare A B");
  const auto params = train::load_checkpoint(a.ckpt);
  manifest.add_input(a.ckpt);

  if (!a.sweep_temps.empty()) {
    std::vector<model::DecodingConfig> grid;
    for (double t : parse_double_list(a.sweep_temps)) {
      model::DecodingConfig c;
      c.strategy = model::DecodeStrategy::temperature;
      c.temperature = t;
      c.seed = a.seed;
      c.k = a.k;
      c.p = a.p;
      grid.push_back(c);
    }
    const auto sweep = evalhall::decoding_sweep(params, items, grid, a.threads);
    std::cout << evalhall::render_sweep(sweep);
    if (!a.out.empty()) {
      io::write_text(a.out, io::to_json(sweep).dump(2) + "\n");
      manifest.add_output(a.out);
      manifest.write(a.out + ".run.json");
    }
    return kExitOk;
  }

  const auto rep = evalhall::hallucination_rate(params, items, decoding_from(a), a.threads);
  std::printf("n=%d hallucination=%.4f abstention_acc=%.4f premise_rejection=%.4f detail=%.3f\n",
              rep.n, rep.hallucination_rate, rep.abstention_accuracy, rep.premise_rejection_rate,
              rep.mean_validated_claims);
  for (const auto& [kind, km] : rep.per_kind)
    std::printf("  %-22s n=%-4d halluc=%.4f grounded=%.4f abstain=%.4f\n", kind.c_str(), km.n,
                km.hallucination_rate, km.grounded_rate, km.abstention_rate);
  if (!a.out.empty()) {
    io::write_text(a.out, io::to_json(rep).dump(2) + "\n");
    manifest.add_output(a.out);
    manifest.write(a.out + ".run.json");
  }
  return kExitOk;
}

struct ReportArgs {
  std::string counts;
  int total = 0;
  std::string lengths;
  std::string field = "answer";
  std::string csv;
  std::string out;
};

int cmd_report(const ReportArgs& a) {
  if (!a.counts.empty()) {
    const auto c = parse_int_list(a.counts);
    if (c.size() != 5) throw ArgumentError("--counts needs 5 values: a,b,tie,both_wrong,error");
    evalhall::PairwiseCounts counts{c[0], c[1], c[2], c[3], c[4]};
    const auto rep = evalhall::report_table(counts, a.total);
    std::cout << evalhall::render_table(rep);
    if (!a.out.empty()) io::write_text(a.out, io::to_json(rep).dump(2) + "\n");
    return kExitOk;
  }
  if (!a.lengths.empty()) {
    std::vector<int> lens;
    for (const auto& j : io::read_jsonl(a.lengths)) {
      if (!j.contains(a.field)) throw ArgumentError("field not found in line: " + a.field);
      lens.push_back(forge::response_length(j.at(a.field).get<TokenSeq>()));
    }
    const auto st = evalhall::length_histogram(lens);
    std::cout << evalhall::render_histogram(st);
    if (!a.csv.empty()) {
      std::string csv = "bin_start,count\n";
      for (const auto& [start, count] : st.bins)
        csv += std::to_string(start) + "," + std::to_string(count) + "\n";
      io::write_text(a.csv, csv);
    }
    if (!a.out.empty()) io::write_text(a.out, io::to_json(st).dump(2) + "\n");
    return kExitOk;
  }
  throw ArgumentError("report needs --counts or --lengths");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"groundloom: grounded-VQA microworld, stage-wise preference training, oracle eval"};
  app.require_subcommand(1);
  app.set_config("--config");

  GenDataArgs gen;
  auto* sub_gen = app.add_subcommand("gen-data", "generate stage-1 data or an eval set");
  sub_gen->add_option("--n", gen.n, "number of samples");
  sub_gen->add_option("--seed", gen.seed)->envname("GROUNDLOOM_SEED");
  sub_gen->add_option("--out", gen.out)->required();
  sub_gen->add_option("--vocab-out", gen.vocab_out, "write the vocabulary manifest");
  sub_gen->add_flag("--eval", gen.eval_mode, "build a held-out eval set instead of D1");

  ForgeArgs forge_args;
  auto* sub_forge = app.add_subcommand("forge", "build the D2 preference set from D1");
  sub_forge->add_option("--d1", forge_args.d1)->required();
  sub_forge->add_option("--seed", forge_args.seed)->envname("GROUNDLOOM_SEED");
  sub_forge->add_option("--out", forge_args.out)->required();
  sub_forge->add_option("--report", forge_args.report, "write the build report JSON");
  sub_forge->add_option("--ratio", forge_args.cfg.ratio, "|D2| / |D1|");
  sub_forge->add_option("--fp-fraction", forge_args.cfg.fp_fraction);
  sub_forge->add_option("--expand-rounds", forge_args.cfg.expand_rounds);
  sub_forge->add_option("--tilt-cap", forge_args.cfg.tilt.cap);
  sub_forge->add_option("--tilt-target-mean", forge_args.tilt_target_mean,
                        "explicit tilt target (default: auto)");
  bool no_tilt = false;
  sub_forge->add_flag("--no-tilt", no_tilt, "disable length-tilted duplication");

  TrainArgs train_args;
  auto* sub_train = app.add_subcommand("train", "stage-wise training");
  sub_train->add_option("--stage", train_args.stage, "sft | dpo")->required();
  sub_train->add_option("--d1", train_args.d1);
  sub_train->add_option("--d2", train_args.d2);
  sub_train->add_option("--ref", train_args.ref, "frozen reference checkpoint (dpo)");
  sub_train->add_option("--out", train_args.out)->required();
  sub_train->add_option("--log", train_args.log, "JSONL training log");
  sub_train->add_option("--seed", train_args.cfg.seed)->envname("GROUNDLOOM_SEED");
  sub_train->add_option("--epochs", train_args.cfg.epochs)
      ->each([&](const std::string&) { train_args.epochs_set = true; });
  sub_train->add_option("--batch-size", train_args.cfg.batch_size);
  sub_train->add_option("--lr", train_args.cfg.learning_rate)
      ->each([&](const std::string&) { train_args.lr_set = true; });
  sub_train->add_option("--optimizer", train_args.optimizer, "adam | sgd");
  sub_train->add_option("--beta-dpo", train_args.cfg.beta_dpo);
  sub_train->add_option("--kl-bound", train_args.cfg.kl_bound);
  sub_train->add_option("--eval-every", train_args.cfg.eval_every);
  double grad_clip = 5.0;
  sub_train->add_option("--grad-clip", grad_clip, "max gradient norm (0 disables)");

  EvalArgs eval_args;
  auto* sub_eval = app.add_subcommand("eval", "metrics, pairwise comparison, sweeps, gates");
  sub_eval->add_option("--ckpt", eval_args.ckpt);
  sub_eval->add_option("--compare", eval_args.compare, "two checkpoints: baseline treated")
      ->expected(2);
  sub_eval->add_option("--evalset", eval_args.evalset);
  sub_eval->add_option("--out", eval_args.out);
  sub_eval->add_option("--gate", eval_args.gate, "acceptance gate suite: stagewise | table2");
  sub_eval->add_option("--decoding", eval_args.decoding, "greedy | temp | topk | topp");
  sub_eval->add_option("--temp", eval_args.temperature);
  sub_eval->add_option("--k", eval_args.k);
  sub_eval->add_option("--p", eval_args.p);
  sub_eval->add_option("--sweep-temps", eval_args.sweep_temps, "comma list for a decode sweep");
  sub_eval->add_option("--seed", eval_args.seed)->envname("GROUNDLOOM_SEED");
  sub_eval->add_option("--threads", eval_args.threads);

  ReportArgs report_args;
  auto* sub_report = app.add_subcommand("report", "render tables and histograms");
  sub_report->add_option("--counts", report_args.counts, "a,b,tie,both_wrong,error");
  sub_report->add_option("--total", report_args.total);
  sub_report->add_option("--lengths", report_args.lengths, "JSONL file with token sequences");
  sub_report->add_option("--field", report_args.field, "token field (answer | y_plus | y_minus)");
  sub_report->add_option("--csv", report_args.csv, "histogram CSV output");
  sub_report->add_option("--out", report_args.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*sub_gen) return cmd_gen_data(gen);
    if (*sub_forge) {
      if (no_tilt) forge_args.cfg.tilt_enabled = false;
      return cmd_forge(forge_args);
    }
    if (*sub_train) {
      if (grad_clip > 0)
        train_args.cfg.grad_clip = grad_clip;
      else
        train_args.cfg.grad_clip.reset();
      return cmd_train(train_args);
    }
    if (*sub_eval) return cmd_eval(eval_args);
    if (*sub_report) return cmd_report(report_args);
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
