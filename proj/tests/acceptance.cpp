// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.
//
//   acceptance <work-dir> [--reuse] [--only N,M,...]
//
// --reuse keeps trained checkpoints found in <work-dir>/protocol instead of
// retraining them (development only; ctest always runs from scratch).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "coat/errors.hpp"
#include "coat/io.hpp"
#include "coat/pipeline.hpp"
#include "coat/rng.hpp"
#include "coat/scoring.hpp"
#include "golden_cases.hpp"
#include "reference_model.hpp"

using namespace coat;
using namespace coat::testing;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. prompt golden files
// ---------------------------------------------------------------------------

Verdict golden_prompts() {
  const auto t0 = Clock::now();
  int matched = 0, round_trips = 0, total = 0;
  for (const auto& g : golden_cases()) {
    ++total;
    const std::string want = read_file(fs::path(COAT_GOLDEN_DIR) / g.file);
    matched += encode_prompt(g.p) == want;
    const auto back = decode_prompt(want);
    round_trips += back.demonstrations == g.p.demonstrations && back.predicted_input == g.p.predicted_input;
  }
  const double s = seconds_since(t0);
  return {matched == 10 && round_trips == 10 && total == 10 && s < 1.0,
          fmt("%d/%d byte-exact, %d/%d decode round-trips, %.3f s", matched, total, round_trips, total, s)};
}

// ---------------------------------------------------------------------------
// 2. likelihood oracle
// ---------------------------------------------------------------------------

ModelConfig toy_config() {
  ModelConfig c;
  c.n_layers = 2;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_ff = 12;
  c.max_seq_len = 40;
  c.vocab_size = 6;
  return c;
}

std::string xs(std::size_t n) { return join(std::vector<std::string>(n, "x"), " "); }

PromptInstance toy_prompt(Rng& rng, std::size_t max_target) {
  PromptInstance p;
  const auto k = rng.below(3);
  for (std::size_t i = 0; i < k; ++i) p.demonstrations.push_back({xs(1 + rng.below(2)), xs(1 + rng.below(2))});
  p.predicted_input = xs(3 + rng.below(2));
  p.predicted_target = xs(1 + rng.below(max_target));
  return p;
}

void enumerate(const TinyLM<double>& m, std::vector<TokenId>& seq, std::size_t depth, double p,
               const std::function<void(const std::vector<TokenId>&, double)>& leaf) {
  if (depth == 0) return leaf(seq, p);
  const auto probs = ref_forward(m, seq).back();
  for (TokenId t = 0; t < static_cast<TokenId>(probs.size()); ++t) {
    seq.push_back(t);
    enumerate(m, seq, depth - 1, p * probs[static_cast<std::size_t>(t)], leaf);
    seq.pop_back();
  }
}

Verdict likelihood_oracle() {
  const auto t0 = Clock::now();
  const Vocabulary v(std::vector<std::string>{"Input:", "Prediction:", "x"});
  Rng rng(29);
  double worst = 0.0, worst_mass = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto m = random_model(toy_config(), 5000 + static_cast<std::uint64_t>(trial));
    const auto p = toy_prompt(rng, 2);
    std::vector<TokenId> seq = tokenize_for_generation(v, p);
    std::vector<TokenId> wanted = tokenize(v, p.predicted_target);
    wanted.push_back(Vocabulary::kEos);
    const std::size_t base = seq.size();
    double total = 0.0, hit = 0.0;
    enumerate(m, seq, wanted.size(), 1.0, [&](const std::vector<TokenId>& s, double prob) {
      total += prob;
      if (std::equal(wanted.begin(), wanted.end(), s.begin() + static_cast<std::ptrdiff_t>(base))) hit = prob;
    });
    worst = std::max(worst, std::abs(target_likelihood(m, v, p).value - hit));
    worst_mass = std::max(worst_mass, std::abs(total - 1.0));
  }
  auto uniform = TinyLM<double>::init(toy_config(), 3);
  uniform.params.final_gain.setZero();
  uniform.params.final_bias.setZero();
  double worst_uniform = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = toy_prompt(rng, 4);
    const auto L = static_cast<double>(split_ws(p.predicted_target).size() + 1);
    worst_uniform = std::max(worst_uniform, std::abs(target_likelihood(uniform, v, p).value - std::pow(1.0 / 6.0, L)));
  }
  const double s = seconds_since(t0);
  return {worst < 1e-9 && worst_mass < 1e-9 && worst_uniform < 1e-9 && s < 10.0,
          fmt("200 prompts, max |model - enumeration| %.2e, max |mass - 1| %.2e, uniform max error %.2e, %.2f s",
              worst, worst_mass, worst_uniform, s)};
}

// ---------------------------------------------------------------------------
// 3. greedy-selection oracle
// ---------------------------------------------------------------------------

Verdict greedy_oracle() {
  const auto t0 = Clock::now();
  const Dataset data = gen_dataset(600, 20, 77);
  const Vocabulary vocab = build_vocab(data);
  ModelConfig mc;
  mc.n_layers = 1;
  mc.d_model = 32;
  mc.n_heads = 4;
  mc.d_ff = 64;
  mc.max_seq_len = 160;
  mc.vocab_size = static_cast<int>(vocab.size());
  auto model = TinyLM<float>::init(mc, 8);
  Rng noise(9);
  model.params.visit([&](const std::string&, auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] += static_cast<float>(0.05 * noise.normal());
  });
  ModelScorer<float> scorer(model, vocab);
  const ConceptIndex idx(data);
  Rng rng(123);
  int pools = 0, steps = 0, mismatches = 0, value_mismatches = 0;
  for (; pools < 500; ++pools) {
    const Sample& pred = data.samples[rng.below(data.size())];
    const auto pool = informative_pool(idx, pred, 1 + rng.below(20), rng.next());
    const int k = static_cast<int>(rng.between(1, 8));
    std::vector<SelectionStep> trace;
    const auto chosen = select_nontrivial(pool, scorer, k, &trace);

    std::vector<const Sample*> selected, remaining = pool.candidates;
    for (std::size_t step = 0; step < chosen.size(); ++step) {
      const Sample* best = nullptr;
      double best_value = 0.0;
      std::vector<double> values;
      std::vector<const Sample*> ordered = remaining;
      for (const Sample* c : ordered) {
        auto demos = selected;
        demos.push_back(c);
        const double value = target_likelihood(model, vocab, make_prompt(demos, pred)).log_value;
        values.push_back(value);
        if (!best || value < best_value || (value == best_value && c->id < best->id)) {
          best = c;
          best_value = value;
        }
      }
      ++steps;
      if (chosen[step] != best) ++mismatches;
      if (step < trace.size() && trace[step].log_values != values) ++value_mismatches;
      selected.push_back(best);
      remaining.erase(std::find(remaining.begin(), remaining.end(), best));
    }
  }
  const double s = seconds_since(t0);
  return {mismatches == 0 && s < 120.0,
          fmt("%d pools, %d greedy steps, %d mismatches (%d steps with differing scores), %.1f s", pools, steps,
              mismatches, value_mismatches, s)};
}

// ---------------------------------------------------------------------------
// 5. gradient check
// ---------------------------------------------------------------------------

Verdict gradient_check() {
  const auto t0 = Clock::now();
  ModelConfig c;
  c.n_layers = 1;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_ff = 16;
  c.max_seq_len = 16;
  c.vocab_size = 9;
  const auto m = random_model(c, 41);
  const std::vector<TrainingSequence> batch{
      {{3, 4, 5, 6, 7, 1}, {0, 0, 1, 1, 1, 0}},
      {{8, 5, 3, 2, 6, 4, 7, 1}, {0, 1, 0, 1, 1, 1, 1, 0}},
  };
  const auto r = grad_check(m, batch, 1e-5, 400, 3);
  const double s = seconds_since(t0);
  return {r.max_relative_error < 1e-4 && r.coordinates >= 200 && s < 60.0,
          fmt("%zu coordinates, max relative error %.2e (%s), %.2f s", static_cast<std::size_t>(r.coordinates),
              r.max_relative_error, r.worst_tensor.c_str(), s)};
}

// ---------------------------------------------------------------------------
// 8. determinism of gen-data, export-curriculum and train
// ---------------------------------------------------------------------------

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "coat");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream sink;
  auto* old = std::cout.rdbuf(sink.rdbuf());
  const int code = cli_main(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(old);
  return code;
}

std::vector<fs::path> artifacts(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto ext = e.path().extension();
    if (ext == ".jsonl" || ext == ".ckpt" || e.path().filename() == "vocab.txt")
      out.push_back(fs::relative(e.path(), root));
  }
  std::sort(out.begin(), out.end());
  return out;
}

Verdict determinism(const fs::path& work) {
  const auto t0 = Clock::now();
  const fs::path dir = work / "determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string config = (dir / "config.json").string();
  write_file(config, R"({
    "seed": 11,
    "data": {"n_samples": 300, "n_concepts": 12, "natural_samples": 0},
    "model": {"n_layers": 1, "d_model": 32, "n_heads": 4, "d_ff": 64},
    "trainer": {"max_steps": 40, "eval_interval": 20, "batch_size": 8}
  })");
  for (const char* run : {"a", "b"}) {
    const std::string out = (dir / run).string();
    const std::string ckpt = out + "/checkpoints/coat/seed-11/stage1.ckpt";
    const std::vector<std::vector<std::string>> commands{
        {"gen-data", "--config", config, "--out", out},
        {"train", "--config", config, "--out", out, "--strategy", "coat"},
        {"train", "--config", config, "--out", out, "--strategy", "random_uniform"},
        {"export-curriculum", "--config", config, "--out", out, "--strategy", "coat", "--checkpoint", ckpt},
        {"export-curriculum", "--config", config, "--out", out, "--strategy", "info_only"},
        {"export-curriculum", "--config", config, "--out", out, "--strategy", "random_uniform"},
    };
    for (const auto& c : commands)
      if (cli(c) != 0) return {false, "command failed: " + c.front()};
  }
  const auto files_a = artifacts(dir / "a"), files_b = artifacts(dir / "b");
  if (files_a != files_b) return {false, "different artifact sets"};
  std::size_t identical = 0;
  std::string differing;
  for (const auto& f : files_a) {
    if (read_file(dir / "a" / f) == read_file(dir / "b" / f))
      ++identical;
    else
      differing += " " + f.string();
  }
  const double s = seconds_since(t0);
  return {identical == files_a.size() && files_a.size() == 9,
          fmt("%zu/%zu artifacts byte-identical (datasets, vocabulary, curricula, checkpoints)%s, %.1f s", identical,
              files_a.size(), differing.c_str(), s)};
}

// ---------------------------------------------------------------------------
// 4, 6, 7, 9. the scaled-down protocol
// ---------------------------------------------------------------------------

struct InvariantTally {
  std::int64_t instances = 0;
  std::int64_t demonstrations = 0;
  std::int64_t off_concept = 0;
  std::int64_t self_included = 0;
};

struct Protocol {
  RunConfig cfg;
  Comparison comparison;
  InvariantTally invariant;
  double train_seconds = 0.0;
  bool ok = false;
  std::string error;
};

RunConfig protocol_config(const fs::path& work) {
  RunConfig cfg;
  cfg.out = work / "protocol";
  cfg.seed = 0;
  cfg.data.natural_samples = 0;
  cfg.data.generator.max_depth = 2;
  cfg.stage = StageSelection::First;
  return cfg;
}

Protocol run_protocol(const fs::path& work, bool reuse) {
  Protocol p;
  p.cfg = protocol_config(work);
  const Layout layout{p.cfg.out};
  try {
    if (!reuse) fs::remove_all(p.cfg.out);
    write_config_snapshot(p.cfg);
    if (!reuse || !fs::exists(layout.data() / "manifest.json")) gen_data(p.cfg);
    const auto t0 = Clock::now();
    for (int s = 0; s < p.cfg.eval.n_seeds; ++s) {
      for (auto strategy : p.cfg.compare) {
        RunConfig run = p.cfg;
        run.seed = p.cfg.seed + static_cast<std::uint64_t>(s);
        run.trainer.strategy = strategy;
        if (reuse && fs::exists(layout.final_checkpoint(strategy, run.seed))) continue;
        const auto t_run = Clock::now();
        const bool informative = strategy != SelectionStrategy::RandomUniform;
        train_run(run, [&](const BuiltInstance& inst, std::int64_t) {
          if (!informative) return;
          ++p.invariant.instances;
          for (const Sample* d : inst.demonstrations) {
            ++p.invariant.demonstrations;
            p.invariant.off_concept += d->concept_id != inst.predicted->concept_id;
            p.invariant.self_included += d == inst.predicted || d->id == inst.predicted->id;
          }
        });
        std::cerr << fmt("  trained %-14s seed %d in %.0f s\n", std::string(strategy_name(strategy)).c_str(), s,
                         seconds_since(t_run));
      }
    }
    p.train_seconds = seconds_since(t0);
    p.comparison = compare_run(p.cfg);
    std::cerr << report_render(p.comparison.reports, p.comparison.deltas).text;
    p.ok = true;
  } catch (const std::exception& e) {
    p.error = e.what();
  }
  return p;
}

const EvalReport* report_for(const Protocol& p, std::string_view label) {
  for (const auto& r : p.comparison.reports)
    if (r.label == label) return &r;
  return nullptr;
}

Verdict informativeness(const Protocol& p, bool reuse) {
  if (!p.ok) return {false, "protocol failed: " + p.error};
  if (reuse && p.invariant.instances == 0) return {false, "no instances observed (checkpoints were reused)"};
  const auto& t = p.invariant;
  return {t.instances > 0 && t.off_concept == 0 && t.self_included == 0,
          fmt("%lld coat/info_only instances, %lld demonstrations, %lld off-concept, %lld self-demonstrations",
              static_cast<long long>(t.instances), static_cast<long long>(t.demonstrations),
              static_cast<long long>(t.off_concept), static_cast<long long>(t.self_included))};
}

std::string per_seed(const EvalReport& r) {
  std::string out;
  for (double a : r.per_seed) out += fmt("%s%.1f", out.empty() ? "" : " ", 100.0 * a);
  return out;
}

Verdict coat_effect(const Protocol& p) {
  if (!p.ok) return {false, "protocol failed: " + p.error};
  const auto* coat = report_for(p, "coat");
  const auto* random = report_for(p, "random_uniform");
  if (!coat || !random) return {false, "missing report rows"};
  int wins = 0;
  for (std::size_t s = 0; s < coat->per_seed.size(); ++s) wins += coat->per_seed[s] > random->per_seed[s];
  const double margin = mean(coat->per_seed) - mean(random->per_seed);
  const auto train = fs::path(p.cfg.out) / "data/train.jsonl";
  const std::size_t n_total = ingest_jsonl(train).size() + ingest_jsonl(fs::path(p.cfg.out) / "data/valid.jsonl").size() +
                              ingest_jsonl(fs::path(p.cfg.out) / "data/test.jsonl").size();
  const bool protocol_ok = n_total >= 2000 && p.cfg.data.n_concepts >= 50 && p.cfg.trainer.max_steps <= 5000 &&
                           coat->per_seed.size() == 5;
  return {protocol_ok && wins >= 4 && margin >= 0.02,
          fmt("coat beats random_uniform in %d/5 seeds, mean %.1f vs %.1f (margin %+.1f points); per seed coat [%s] "
              "random [%s]; %zu samples, %d concepts, %d steps, training %.0f s",
              wins, 100.0 * mean(coat->per_seed), 100.0 * mean(random->per_seed), 100.0 * margin,
              per_seed(*coat).c_str(), per_seed(*random).c_str(), n_total, p.cfg.data.n_concepts,
              p.cfg.trainer.max_steps, p.train_seconds)};
}

Verdict ablation(const Protocol& p) {
  if (!p.ok) return {false, "protocol failed: " + p.error};
  const auto* coat = report_for(p, "coat");
  const auto* info = report_for(p, "info_only");
  if (!coat || !info) return {false, "missing report rows"};
  const double gap = mean(coat->per_seed) - mean(info->per_seed);

  // Same predicted samples, pools, k and snapshot for both strategies.
  const Layout layout{p.cfg.out};
  const StoredData d = load_data(layout);
  const Checkpoint ck = load_checkpoint(layout.final_checkpoint(SelectionStrategy::Coat, p.cfg.seed));
  ModelScorer<float> scorer(ck.model, ck.vocab);
  const ConceptIndex idx(d.train);
  double coat_sum = 0.0, info_sum = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < d.train.size() && n < 300; i += 3) {
    const Sample& pred = d.train.samples[i];
    const auto pool = informative_pool(idx, pred, p.cfg.trainer.pool_size, derive_seed(i, "ablation-pool"));
    const int k = draw_k(derive_seed(i, "ablation-k"));
    const auto by_coat = select_nontrivial(pool, scorer, k);
    const auto by_info = select_info_only(pool, k, derive_seed(i, "ablation-info"));
    coat_sum += target_likelihood(ck.model, ck.vocab, make_prompt(by_coat, pred)).value;
    info_sum += target_likelihood(ck.model, ck.vocab, make_prompt(by_info, pred)).value;
    ++n;
  }
  const double coat_lik = coat_sum / n, info_lik = info_sum / n;
  return {gap >= -0.01 && coat_lik < info_lik,
          fmt("mean accuracy coat %.1f vs info_only %.1f (%+.1f points); mean target likelihood on %d shared "
              "prompts: coat %.4f < info_only %.4f",
              100.0 * mean(coat->per_seed), 100.0 * mean(info->per_seed), 100.0 * gap, n, coat_lik, info_lik)};
}

Verdict k_distribution(const Protocol& p) {
  if (!p.ok) return {false, "protocol failed: " + p.error};
  const Layout layout{p.cfg.out};
  const auto ckpt = layout.final_checkpoint(SelectionStrategy::Coat, p.cfg.seed);
  std::size_t records = 0, out_of_range = 0;
  std::set<int> seen_k;
  for (auto strategy : kAllStrategies) {
    const auto s = export_curriculum(p.cfg, strategy, strategy == SelectionStrategy::Coat ? std::optional(ckpt)
                                                                                       : std::nullopt);
    for (const auto& r : parse_curriculum(read_file(s.file))) {
      ++records;
      seen_k.insert(r.k);
      out_of_range += r.k < 2 || r.k > 8 || static_cast<int>(r.demonstration_ids.size()) != r.k;
    }
  }
  std::size_t outcomes = 0, not_three = 0;
  for (const char* label : {"coat", "info_only", "random_uniform"}) {
    for (const auto& o : parse_outcomes(read_file(layout.reports() / "compare" / (std::string(label) + ".outcomes.jsonl")))) {
      ++outcomes;
      not_three += o.k != 3 || o.demo_ids.size() != 3;
    }
  }
  std::size_t reports_at_three = 0;
  const auto reports = parse_reports(read_file(layout.reports() / "compare/comparison.jsonl"));
  for (const auto& r : reports) reports_at_three += r.k_shots == 3;
  const bool defaults = EvalConfig{}.k_shots == 3 && RunConfig{}.eval.k_shots == 3;
  return {records > 0 && out_of_range == 0 && seen_k == std::set<int>{2, 3, 4, 5, 6, 7, 8} && outcomes > 0 &&
              not_three == 0 && reports_at_three == reports.size() && defaults,
          fmt("%zu exported records, k range [%d, %d], %zu outside [2, 8]; %zu persisted evaluation records, %zu "
              "with k != 3; default k_shots %d",
              records, seen_k.empty() ? 0 : *seen_k.begin(), seen_k.empty() ? 0 : *seen_k.rbegin(), out_of_range,
              outcomes, not_three, EvalConfig{}.k_shots)};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: acceptance <work-dir> [--reuse] [--only 1,2,...]\n";
    return 2;
  }
  const fs::path work = argv[1];
  bool reuse = false;
  std::set<int> only;
  for (int i = 2; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--reuse") {
      reuse = true;
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream list(argv[++i]);
      for (std::string item; std::getline(list, item, ',');) only.insert(std::stoi(item));
    }
  }
  fs::create_directories(work);
  setenv("COAT_LOG_LEVEL", "quiet", 1);
  auto wanted = [&](int n) { return only.empty() || only.count(n); };

  const char* names[] = {"",
                         "prompt format golden files",
                         "likelihood oracle",
                         "greedy-selection oracle",
                         "informativeness invariant",
                         "gradient check",
                         "coat beats random_uniform",
                         "non-triviality ablation",
                         "determinism",
                         "k distribution"};
  int failures = 0;
  std::ofstream results(work / "acceptance_results.txt");
  auto report = [&](int n, const std::function<Verdict()>& f) {
    if (!wanted(n)) return;
    Verdict v;
    try {
      v = f();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failures += !v.pass;
    std::ostringstream line;
    line << "criterion " << n << " (" << names[n] << "): " << (v.pass ? "PASS" : "FAIL") << " - " << v.detail;
    std::cout << line.str() << std::endl;
    results << line.str() << std::endl;
  };

  report(1, golden_prompts);
  report(2, likelihood_oracle);
  report(3, greedy_oracle);
  report(5, gradient_check);
  report(8, [&] { return determinism(work); });
  if (wanted(4) || wanted(6) || wanted(7) || wanted(9)) {
    const Protocol p = run_protocol(work, reuse);
    report(4, [&] { return informativeness(p, reuse); });
    report(6, [&] { return coat_effect(p); });
    report(7, [&] { return ablation(p); });
    report(9, [&] { return k_distribution(p); });
  }
  return failures == 0 ? 0 : 1;
}
