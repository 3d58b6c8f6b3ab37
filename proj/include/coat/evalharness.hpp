#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "coat/checkpoint.hpp"
#include "coat/syndata.hpp"

namespace coat {

enum class DemoSource : std::uint8_t { SameConcept, Random };

std::string_view demo_source_name(DemoSource s) noexcept;  // "same_concept", "random"
std::optional<DemoSource> parse_demo_source(std::string_view name) noexcept;

struct EvalConfig {
  int k_shots = 3;
  DemoSource source = DemoSource::SameConcept;
  int n_seeds = 5;
  std::uint64_t seed = 0;
  int max_new_tokens = 8;

  /// Throws ConfigError when k_shots < 0, n_seeds < 1 or max_new_tokens < 1.
  void validate() const;
};

/// Outcome for one test sample.
struct SampleOutcome {
  std::int64_t sample_id = 0;
  std::string concept_id;
  int k = 0;
  std::vector<std::int64_t> demo_ids;
  std::string prediction;
  std::string gold;
  bool correct = false;
  double target_likelihood = 0.0;

  friend bool operator==(const SampleOutcome&, const SampleOutcome&) = default;
};

struct ConceptTally {
  std::int64_t correct = 0;
  std::int64_t total = 0;
  friend bool operator==(const ConceptTally&, const ConceptTally&) = default;
};

struct EvalReport {
  std::string label;
  std::int64_t correct = 0;
  std::int64_t total = 0;
  double accuracy = 0.0;  // correct / total
  std::int64_t excluded = 0;  // samples without any available demonstration
  std::map<std::string, ConceptTally> per_concept;
  std::vector<double> per_seed;  // accuracy of each seed's model
  double mean_target_likelihood = 0.0;
  std::int64_t k_shots = 0;
  std::string demo_source;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

struct EvalResult {
  EvalReport report;
  std::vector<SampleOutcome> outcomes;
};

/// k-shot greedy evaluation of every test sample. Demonstrations come from
/// `demo_source` (same concept, or anywhere for DemoSource::Random), never
/// the predicted sample itself, and are drawn identically for any model.
EvalResult evaluate(const TinyLM<float>& m, const Vocabulary& v, const Dataset& test, const Dataset& demo_source,
                    const EvalConfig& cfg, std::uint64_t eval_seed);

/// Recomputes a report from persisted outcomes (accuracy, per-concept tallies, likelihood mean).
EvalReport summarize(const std::vector<SampleOutcome>& outcomes, std::string label);

std::string outcomes_to_jsonl(const std::vector<SampleOutcome>& outcomes);
std::vector<SampleOutcome> parse_outcomes(std::string_view text);

/// A labelled list of per-seed checkpoints trained under identical budgets.
struct LabelledModels {
  std::string label;
  std::vector<const Checkpoint*> seeds;
};

struct PairwiseDelta {
  std::string first, second;
  double delta = 0.0;  // mean per-seed accuracy of first minus second
  int wins = 0;        // seeds where first beats second
  int seeds = 0;
  double sign_test_p = 1.0;  // one-sided binomial P(X >= wins) under p = 1/2
};

struct Comparison {
  std::vector<EvalReport> reports;  // input order
  std::vector<PairwiseDelta> deltas;
  std::vector<std::vector<SampleOutcome>> outcomes;  // per report, all seeds concatenated
};

/// Evaluates every seed's checkpoint with seed-specific demonstration draws
/// shared across labels. Throws ConfigError on differing vocabularies or
/// seed counts.
Comparison compare_strategies(const std::vector<LabelledModels>& models, const Dataset& test,
                              const Dataset& demo_source, const EvalConfig& cfg);

double mean(const std::vector<double>& xs);

/// One-sided binomial tail P(X >= wins) for X ~ Binomial(n, 1/2).
double sign_test_p(int wins, int n);

struct RenderedReport {
  std::string text;
  std::string jsonl;
};

/// Aligned text table with percentages at one decimal, plus one JSON object
/// per report (then per delta) that parse_reports reads back losslessly.
RenderedReport report_render(const std::vector<EvalReport>& reports, const std::vector<PairwiseDelta>& deltas = {});
std::vector<EvalReport> parse_reports(std::string_view jsonl);

}  // namespace coat
