#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "coat/evalharness.hpp"
#include "coat/sampler.hpp"
#include "coat/trainer.hpp"

namespace coat {

struct DataSettings {
  int n_samples = 2000;
  int n_concepts = 50;
  double test_fraction = 0.2;   // concepts held out for unseen-concept evaluation
  double valid_fraction = 0.1;  // per-concept share of seen samples used for validation
  int natural_samples = 600;    // stage-2 natural-proxy samples, 0 disables stage 2
  int natural_chains = 8;
  GeneratorConfig generator;
};

enum class StageSelection : std::uint8_t { First, Second, Both };

std::string_view stage_name(StageSelection s) noexcept;  // "1", "2", "both"
std::optional<StageSelection> parse_stage(std::string_view name) noexcept;

/// Everything a command needs. Every field has a default; parsing rejects
/// unknown keys and wrong types, naming the offending key.
struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out = "coat-run";
  DataSettings data;
  ModelConfig model;  // vocab_size is filled in from the vocabulary
  TrainConfig trainer;
  StageSelection stage = StageSelection::First;
  EvalConfig eval;
  std::vector<SelectionStrategy> compare = {SelectionStrategy::Coat, SelectionStrategy::InfoOnly,
                                            SelectionStrategy::RandomUniform};

  /// Lab defaults: the desk preset with lr 1e-3, 3000 steps and a small model.
  RunConfig();

  /// Throws ConfigError when any section is inconsistent.
  void validate() const;
};

/// Throws ConfigError naming the key ("model.d_model: expected an integer",
/// "unknown key 'trainer.foo'"); missing keys keep their defaults.
RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json run_config_to_json(const RunConfig& cfg);

/// Output directory layout.
struct Layout {
  std::filesystem::path root;

  std::filesystem::path data() const { return root / "data"; }
  std::filesystem::path curricula() const { return root / "curricula"; }
  std::filesystem::path checkpoints() const { return root / "checkpoints"; }
  std::filesystem::path reports() const { return root / "reports"; }
  std::filesystem::path config_snapshot() const { return root / "config.json"; }

  std::filesystem::path run_dir(SelectionStrategy s, std::uint64_t seed) const;
  /// Final checkpoint of a run: stage 2 when present, otherwise stage 1.
  std::filesystem::path final_checkpoint(SelectionStrategy s, std::uint64_t seed) const;
};

/// The generated data as written by gen_data.
struct StoredData {
  Dataset train, valid, test;
  Dataset natural_train, natural_valid;  // empty without stage 2
  Vocabulary vocab;
};

StoredData load_data(const Layout& layout);

/// Writes data/{train,valid,test}.jsonl, the natural-proxy files when
/// enabled, data/vocab.txt and data/manifest.json.
StoredData gen_data(const RunConfig& cfg);

struct ExportSummary {
  std::filesystem::path file;
  std::size_t records = 0;
  std::size_t skipped = 0;
};

/// One record per training sample with at least one informative
/// demonstration. coat requires a checkpoint to score with (ConfigError).
ExportSummary export_curriculum(const RunConfig& cfg, SelectionStrategy strategy,
                                const std::optional<std::filesystem::path>& checkpoint);

/// Trains cfg.trainer.strategy for cfg.stage with the global seed and writes
/// checkpoints/<strategy>/seed-<n>/stage<i>.ckpt and stage<i>.csv.
std::vector<StageResult> train_run(const RunConfig& cfg, const InstanceObserver& observer = {});

/// Evaluates the final checkpoint of (cfg.trainer.strategy, cfg.seed).
EvalResult eval_run(const RunConfig& cfg);

/// Compares cfg.compare over seeds cfg.seed .. cfg.seed + eval.n_seeds - 1.
Comparison compare_run(const RunConfig& cfg);

/// Writes `cfg` to the snapshot path of its output directory.
void write_config_snapshot(const RunConfig& cfg);

}  // namespace coat
