#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "coat/checkpoint.hpp"
#include "coat/model.hpp"
#include "coat/prompts.hpp"
#include "coat/sampler.hpp"
#include "coat/syndata.hpp"

namespace coat {

struct TrainConfig {
  SelectionStrategy strategy = SelectionStrategy::Coat;
  double learning_rate = 3e-4;
  int batch_size = 16;
  int max_steps = 5000;
  int patience = 5;          // evaluations without improvement before stopping
  int eval_interval = 100;   // optimizer steps between validation evaluations
  std::size_t pool_size = kDefaultPoolSize;
  int scorer_refresh = 1;    // steps between scorer snapshot refreshes (coat)
  double grad_clip = 1.0;    // global gradient-norm clip, 0 disables
  std::uint64_t seed = 0;

  /// Batch 16, lr 3e-4, eval every 100 steps, patience 5, at most 5000 steps.
  static TrainConfig desk();
  /// lr 2e-5, batch 30; tuned for a large pretrained model.
  static TrainConfig pretrained_finetune();

  /// Throws ConfigError on non-positive sizes or rates, or when max_steps is
  /// shorter than eval_interval (validation would never run).
  void validate() const;
};

/// One constructed training prompt.
struct BuiltInstance {
  const Sample* predicted = nullptr;
  std::vector<const Sample*> demonstrations;
  PromptInstance prompt;
  int k = 0;  // drawn shot count; demonstrations.size() may be smaller for small concepts
};

/// Draws k, applies cfg.strategy and assembles the prompt. `scorer` is
/// required for coat (ConfigError otherwise). Throws NoDemonstrations when
/// coat/info_only find no other sample of the predicted concept.
BuiltInstance build_training_instance(const Dataset& d, const ConceptIndex& idx, const Sample& predicted,
                                      const TrainConfig& cfg, Scorer* scorer, std::uint64_t seed);

/// Fixed validation prompts shared by all strategies: every validation
/// sample whose concept occurs in `train` gets k ~ U[2, 8] uniformly drawn
/// same-concept demonstrations from `train`.
std::vector<TrainingSequence> build_validation_set(const Dataset& train, const Dataset& valid, const Vocabulary& v,
                                                   std::uint64_t seed);

struct TrainRecord {
  std::int64_t step = 0;
  double train_loss = 0.0;  // mean batch loss since the previous record
  double valid_loss = 0.0;
  SelectionStrategy strategy = SelectionStrategy::Coat;
  std::int64_t skipped = 0;  // cumulative skipped instances
  std::int64_t wall_ms = 0;
};

struct TrainLog {
  std::vector<TrainRecord> records;
  std::int64_t chosen_step = 0;
  std::int64_t skipped = 0;
  std::int64_t steps_run = 0;

  /// Header: step,train_loss,valid_loss,strategy,skipped,wall_ms
  std::string to_csv() const;
};

struct StageResult {
  Checkpoint checkpoint;  // best validation loss
  TrainLog log;
};

/// Called for every constructed instance that enters a batch.
using InstanceObserver = std::function<void(const BuiltInstance&, std::int64_t step)>;

/// Trains from `start` on prompts built from `train` until patience runs out
/// or max_steps. Returns the checkpoint with the lowest validation loss.
StageResult train_stage(const Checkpoint& start, const Dataset& train, const Dataset& valid, const TrainConfig& cfg,
                        const InstanceObserver& observer = {});

struct StageData {
  Dataset train;
  Dataset valid;
};

/// Stage 1, then stage 2 continuing from the stage-1 best checkpoint. A null
/// `stage2` runs stage 1 only. Errors are rethrown prefixed with the stage.
std::vector<StageResult> train_two_stage(const Checkpoint& start, const StageData& stage1, const StageData* stage2,
                                         const TrainConfig& cfg1, const TrainConfig& cfg2,
                                         const InstanceObserver& observer = {});

/// Fresh model and optimizer over `vocab` (vocab_size is taken from it).
Checkpoint initial_checkpoint(ModelConfig cfg, const Vocabulary& vocab, double learning_rate, std::uint64_t seed);

}  // namespace coat
