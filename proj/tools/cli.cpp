#include "cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "coat/errors.hpp"
#include "coat/pipeline.hpp"

namespace coat {

namespace {

enum class Verbosity { Quiet, Info, Debug };

// COAT_LOG_LEVEL selects what goes to stderr: quiet, info (default) or debug.
Verbosity verbosity() {
  const char* env = std::getenv("COAT_LOG_LEVEL");
  const std::string level = env ? env : "info";
  if (level == "quiet" || level == "0") return Verbosity::Quiet;
  if (level == "debug" || level == "2") return Verbosity::Debug;
  return Verbosity::Info;
}

void log(Verbosity at, const std::string& msg) {
  if (verbosity() >= at) std::cerr << "[coat] " << msg << "\n";
}

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> strategy;
  std::optional<std::string> stage;
  std::optional<int> k_shots;
  std::optional<std::string> checkpoint;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON run configuration (defaults apply to missing keys)");
  cmd->add_option("--seed", f.seed, "global seed");
  cmd->add_option("--out", f.out, "output directory");
}

void add_strategy(CLI::App* cmd, Flags& f) {
  cmd->add_option("--strategy", f.strategy, "coat | info_only | random_uniform")
      ->check(CLI::IsMember({"coat", "info_only", "random_uniform"}));
}

RunConfig resolve(const Flags& f) {
  RunConfig cfg;
  if (!f.config.empty()) {
    try {
      cfg = load_run_config(f.config);
    } catch (const IoError& e) {
      throw ConfigError(e.what());
    }
  }
  if (f.seed) cfg.seed = *f.seed;
  if (f.out) cfg.out = *f.out;
  if (f.strategy) cfg.trainer.strategy = *parse_strategy(*f.strategy);
  if (f.stage) cfg.stage = *parse_stage(*f.stage);
  if (f.k_shots) cfg.eval.k_shots = *f.k_shots;
  cfg.validate();
  return cfg;
}

std::string percent(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * x);
  return buf;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"Concept-aware demonstration sampling lab", "coat"};
  app.require_subcommand(1);
  Flags f;

  auto* gen = app.add_subcommand("gen-data", "generate train/valid/test JSONL and the vocabulary");
  add_common(gen, f);

  auto* exp = app.add_subcommand("export-curriculum", "write the training prompts one strategy would construct");
  add_common(exp, f);
  add_strategy(exp, f);
  exp->add_option("--checkpoint", f.checkpoint, "checkpoint to score candidates with (required for coat)");

  auto* train = app.add_subcommand("train", "train one strategy and seed");
  add_common(train, f);
  add_strategy(train, f);
  train->add_option("--stage", f.stage, "1 | 2 | both")->check(CLI::IsMember({"1", "2", "both"}));

  auto* eval = app.add_subcommand("eval", "evaluate the final checkpoint of one strategy and seed");
  add_common(eval, f);
  add_strategy(eval, f);
  eval->add_option("--k-shots", f.k_shots, "demonstrations per evaluation prompt");

  auto* cmp = app.add_subcommand("compare", "evaluate every compared strategy over eval.n_seeds seeds");
  add_common(cmp, f);
  cmp->add_option("--k-shots", f.k_shots, "demonstrations per evaluation prompt");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const RunConfig cfg = resolve(f);
    write_config_snapshot(cfg);
    log(Verbosity::Debug, "config " + run_config_to_json(cfg).dump());
    if (gen->parsed()) {
      const auto d = gen_data(cfg);
      std::cout << "data: train " << d.train.size() << ", valid " << d.valid.size() << ", test " << d.test.size()
                << " (" << d.test.concept_universe().size() << " unseen concepts), vocab " << d.vocab.size() << "\n";
    } else if (exp->parsed()) {
      const auto s = export_curriculum(cfg, cfg.trainer.strategy,
                                       f.checkpoint ? std::optional<std::filesystem::path>(*f.checkpoint)
                                                    : std::nullopt);
      std::cout << "curriculum: " << s.records << " records, " << s.skipped << " skipped -> " << s.file.string()
                << "\n";
    } else if (train->parsed()) {
      log(Verbosity::Info, "training " + std::string(strategy_name(cfg.trainer.strategy)) + " seed " +
                               std::to_string(cfg.seed) + " stage " + std::string(stage_name(cfg.stage)));
      const auto results = train_run(cfg);
      for (const auto& r : results) {
        for (const auto& rec : r.log.records)
          log(Verbosity::Debug, "step " + std::to_string(rec.step) + " train " + std::to_string(rec.train_loss) +
                                    " valid " + std::to_string(rec.valid_loss));
        std::cout << "trained: chosen step " << r.log.chosen_step << " of " << r.log.steps_run << ", skipped "
                  << r.log.skipped << "\n";
      }
    } else if (eval->parsed()) {
      const auto r = eval_run(cfg);
      std::cout << r.report.label << ": " << percent(r.report.accuracy) << " (" << r.report.correct << "/"
                << r.report.total << ")\n";
    } else if (cmp->parsed()) {
      const auto c = compare_run(cfg);
      std::cout << report_render(c.reports, c.deltas).text;
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "coat: configuration error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "coat: error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace coat
