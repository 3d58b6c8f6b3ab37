#include "coat/trainer.hpp"

#include <chrono>
#include <cstdio>
#include <limits>
#include <optional>

#include "coat/errors.hpp"
#include "coat/rng.hpp"
#include "coat/scoring.hpp"

namespace coat {

TrainConfig TrainConfig::desk() { return TrainConfig{}; }

TrainConfig TrainConfig::pretrained_finetune() {
  TrainConfig c;
  c.learning_rate = 2e-5;
  c.batch_size = 30;
  return c;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (patience < 1) throw ConfigError("patience must be at least 1");
  if (eval_interval < 1) throw ConfigError("eval_interval must be at least 1");
  if (pool_size < 1) throw ConfigError("pool_size must be at least 1");
  if (scorer_refresh < 1) throw ConfigError("scorer_refresh must be at least 1");
  if (!(grad_clip >= 0.0)) throw ConfigError("grad_clip must be non-negative");
  if (max_steps < eval_interval)
    throw ConfigError("max_steps (" + std::to_string(max_steps) + ") is below eval_interval (" +
                      std::to_string(eval_interval) + "); validation would never run");
}

BuiltInstance build_training_instance(const Dataset& d, const ConceptIndex& idx, const Sample& predicted,
                                      const TrainConfig& cfg, Scorer* scorer, std::uint64_t seed) {
  BuiltInstance out;
  out.predicted = &predicted;
  out.k = draw_k(derive_seed(seed, "k"));
  switch (cfg.strategy) {
    case SelectionStrategy::Coat: {
      if (!scorer) throw ConfigError("strategy coat needs a scorer");
      const auto pool = informative_pool(idx, predicted, cfg.pool_size, derive_seed(seed, "pool"));
      out.demonstrations = select_nontrivial(pool, *scorer, out.k);
      break;
    }
    case SelectionStrategy::InfoOnly: {
      const auto pool = informative_pool(idx, predicted, cfg.pool_size, derive_seed(seed, "pool"));
      out.demonstrations = select_info_only(pool, out.k, derive_seed(seed, "select"));
      break;
    }
    case SelectionStrategy::RandomUniform:
      out.demonstrations = select_random(d, predicted, out.k, derive_seed(seed, "select"));
      break;
  }
  out.prompt = make_prompt(out.demonstrations, predicted);
  return out;
}

std::vector<TrainingSequence> build_validation_set(const Dataset& train, const Dataset& valid, const Vocabulary& v,
                                                   std::uint64_t seed) {
  const ConceptIndex idx(train);
  std::vector<TrainingSequence> out;
  for (std::size_t i = 0; i < valid.samples.size(); ++i) {
    const Sample& s = valid.samples[i];
    std::vector<const Sample*> candidates;
    for (std::int64_t id : idx.lookup(s.concept_id)) {
      const Sample& c = idx.sample(id);
      if (c.input != s.input) candidates.push_back(&c);
    }
    if (candidates.empty()) continue;
    const auto k = static_cast<std::size_t>(draw_k(derive_seed(seed, "k", i)));
    Rng rng(derive_seed(seed, "demos", i));
    rng.partial_shuffle(candidates, k);
    candidates.resize(std::min(k, candidates.size()));
    out.push_back(to_training_sequence(tokenize_for_training(v, make_prompt(candidates, s))));
  }
  return out;
}

std::string TrainLog::to_csv() const {
  std::string out = "step,train_loss,valid_loss,strategy,skipped,wall_ms\n";
  char buf[256];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%lld,%.6f,%.6f,%s,%lld,%lld\n", static_cast<long long>(r.step), r.train_loss,
                  r.valid_loss, std::string(strategy_name(r.strategy)).c_str(), static_cast<long long>(r.skipped),
                  static_cast<long long>(r.wall_ms));
    out += buf;
  }
  return out;
}

StageResult train_stage(const Checkpoint& start, const Dataset& train, const Dataset& valid, const TrainConfig& cfg,
                        const InstanceObserver& observer) {
  cfg.validate();
  if (train.empty()) throw InvalidArgument("train_stage: training set is empty");
  if (valid.empty()) throw InvalidArgument("train_stage: validation set is empty");
  const Vocabulary& vocab = start.vocab;
  const ConceptIndex idx(train);
  const auto valid_set = build_validation_set(train, valid, vocab, derive_seed(cfg.seed, "validation"));
  if (valid_set.empty()) throw ConfigError("no validation sample shares a concept with the training set");

  TinyLM<float> model = start.model;
  OptimizerState<float> opt = start.optimizer;
  opt.learning_rate = cfg.learning_rate;
  opt.grad_clip = cfg.grad_clip;
  std::optional<TinyLM<float>> snapshot;

  StageResult result;
  TrainLog& log = result.log;
  double best_loss = std::numeric_limits<double>::infinity();
  int evals_without_improvement = 0;
  const auto t0 = std::chrono::steady_clock::now();

  std::vector<std::size_t> order(train.samples.size());
  std::size_t cursor = order.size();
  std::uint64_t epoch = 0, instance_counter = 0;
  std::int64_t skipped = 0, consecutive_skips = 0;
  double loss_sum = 0.0;
  int loss_count = 0;

  for (std::int64_t step = 1; step <= cfg.max_steps; ++step) {
    if (cfg.strategy == SelectionStrategy::Coat && cfg.scorer_refresh > 1 && (step - 1) % cfg.scorer_refresh == 0)
      snapshot = model;
    ModelScorer<float> scorer(snapshot ? *snapshot : model, vocab);

    std::vector<TrainingSequence> batch;
    while (static_cast<int>(batch.size()) < cfg.batch_size) {
      if (cursor == order.size()) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng(derive_seed(cfg.seed, "epoch", epoch++)).shuffle(order);
        cursor = 0;
      }
      const Sample& predicted = train.samples[order[cursor++]];
      BuiltInstance inst;
      try {
        inst = build_training_instance(train, idx, predicted, cfg, &scorer,
                                       derive_seed(cfg.seed, "instance", instance_counter++));
      } catch (const NoDemonstrations&) {
        ++skipped;
        if (++consecutive_skips > static_cast<std::int64_t>(train.size()))
          throw ConfigError("no training sample has a same-concept demonstration");
        continue;
      }
      consecutive_skips = 0;
      if (observer) observer(inst, step);
      batch.push_back(to_training_sequence(tokenize_for_training(vocab, inst.prompt)));
    }

    loss_sum += backward_and_step(model, opt, batch);
    ++loss_count;

    if (step % cfg.eval_interval == 0) {
      TrainRecord rec;
      rec.step = step;
      rec.train_loss = loss_sum / loss_count;
      rec.valid_loss = batch_loss(model, valid_set);
      rec.strategy = cfg.strategy;
      rec.skipped = skipped;
      rec.wall_ms =
          std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
      log.records.push_back(rec);
      loss_sum = 0.0;
      loss_count = 0;
      if (rec.valid_loss < best_loss) {
        best_loss = rec.valid_loss;
        evals_without_improvement = 0;
        result.checkpoint = Checkpoint{model, opt, vocab, opt.step};
        log.chosen_step = step;
      } else if (++evals_without_improvement >= cfg.patience) {
        log.steps_run = step;
        break;
      }
    }
    log.steps_run = step;
  }
  log.skipped = skipped;
  return result;
}

std::vector<StageResult> train_two_stage(const Checkpoint& start, const StageData& stage1, const StageData* stage2,
                                         const TrainConfig& cfg1, const TrainConfig& cfg2,
                                         const InstanceObserver& observer) {
  auto run = [&](int stage, const Checkpoint& from, const StageData& data, const TrainConfig& cfg) {
    const std::string tag = "stage " + std::to_string(stage) + ": ";
    try {
      return train_stage(from, data.train, data.valid, cfg, observer);
    } catch (const ConfigError& e) {
      throw ConfigError(tag + e.what());
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(tag + e.what());
    } catch (const NonFiniteLoss& e) {
      throw NonFiniteLoss(tag + e.what());
    }
  };
  std::vector<StageResult> out;
  out.push_back(run(1, start, stage1, cfg1));
  if (stage2) out.push_back(run(2, out.front().checkpoint, *stage2, cfg2));
  return out;
}

Checkpoint initial_checkpoint(ModelConfig cfg, const Vocabulary& vocab, double learning_rate, std::uint64_t seed) {
  cfg.vocab_size = static_cast<int>(vocab.size());
  Checkpoint c;
  c.model = TinyLM<float>::init(cfg, seed);
  c.optimizer = OptimizerState<float>::create(cfg, learning_rate);
  c.vocab = vocab;
  c.step = 0;
  return c;
}

}  // namespace coat
