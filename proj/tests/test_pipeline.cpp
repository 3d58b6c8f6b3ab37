#include <doctest.h>

#include <filesystem>
#include <iostream>
#include <sstream>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "coat/errors.hpp"
#include "coat/io.hpp"
#include "coat/pipeline.hpp"

using namespace coat;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("coat_pipeline_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

const char* kSmallConfig = R"({
  "data": {"n_samples": 120, "n_concepts": 10, "natural_samples": 60, "natural_chains": 3},
  "model": {"n_layers": 1, "d_model": 16, "n_heads": 2, "d_ff": 32, "max_seq_len": 256},
  "trainer": {"batch_size": 4, "max_steps": 8, "eval_interval": 4, "patience": 3},
  "eval": {"n_seeds": 2}
})";

struct Captured {
  int code = 0;
  std::string out, err;
};

Captured run(std::vector<std::string> args) {
  args.insert(args.begin(), "coat");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  auto* old_out = std::cout.rdbuf(out.rdbuf());
  auto* old_err = std::cerr.rdbuf(err.rdbuf());
  Captured c;
  c.code = cli_main(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  c.out = out.str();
  c.err = err.str();
  return c;
}

std::size_t count_lines(const std::string& text) { return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')); }

struct Workspace {
  TempDir dir;
  std::string config, out;
  explicit Workspace(const std::string& tag) : dir(tag) {
    config = (dir.path / "config.json").string();
    out = (dir.path / "run").string();
    write_file(config, kSmallConfig);
  }
  std::vector<std::string> base(const std::string& cmd) const { return {cmd, "--config", config, "--out", out}; }
};

}  // namespace

TEST_CASE("run configs are strict and round-trip") {
  const RunConfig d;
  CHECK(d.eval.k_shots == 3);
  CHECK(d.trainer.pool_size == 20);
  CHECK(d.stage == StageSelection::First);
  CHECK(d.compare.size() == 3);
  CHECK_NOTHROW(d.validate());

  const RunConfig empty = parse_run_config("{}");
  CHECK(run_config_to_json(empty) == run_config_to_json(d));

  auto message = [](const char* text) {
    try {
      parse_run_config(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(message(R"({"sed": 1})").find("'sed'") != std::string::npos);
  CHECK(message(R"({"model": {"d_model": 16, "width": 3}})").find("'model.width'") != std::string::npos);
  CHECK(message(R"({"data": {"generator": {"depth": 3}}})").find("'data.generator.depth'") != std::string::npos);
  CHECK(message(R"({"model": {"d_model": "big"}})").find("model.d_model") != std::string::npos);
  CHECK(message(R"({"trainer": {"strategy": "best"}})").find("trainer.strategy") != std::string::npos);
  CHECK(message(R"({"eval": {"k_shots": 1.5}})").find("eval.k_shots") != std::string::npos);
  CHECK(message(R"({"seed": -3})").find("seed") != std::string::npos);
  CHECK(message(R"({"compare": ["coat", "oracle"]})").find("compare") != std::string::npos);
  CHECK(message("{not json").find("not valid JSON") != std::string::npos);
  CHECK(message(R"({"model": {"d_model": 10, "n_heads": 4}})") != "no error");

  RunConfig custom = parse_run_config(kSmallConfig);
  custom.seed = 9;
  custom.trainer.strategy = SelectionStrategy::InfoOnly;
  custom.stage = StageSelection::Both;
  const auto text = run_config_to_json(custom).dump();
  CHECK(run_config_to_json(parse_run_config(text)) == run_config_to_json(custom));
  CHECK(parse_stage("both") == StageSelection::Both);
  CHECK_FALSE(parse_stage("3").has_value());
}

TEST_CASE("gen-data writes splits, vocabulary and a manifest, reproducibly") {
  Workspace ws("gen");
  const auto first = run(ws.base("gen-data"));
  REQUIRE(first.code == 0);
  const fs::path data = fs::path(ws.out) / "data";
  for (const char* f : {"train.jsonl", "valid.jsonl", "test.jsonl", "natural_train.jsonl", "natural_valid.jsonl",
                        "vocab.txt", "manifest.json"})
    CHECK(fs::exists(data / f));
  CHECK(fs::exists(fs::path(ws.out) / "config.json"));

  const auto manifest = nlohmann::json::parse(read_file(data / "manifest.json"));
  const StoredData stored = load_data(Layout{ws.out});
  CHECK(manifest["counts"]["train"] == stored.train.size());
  CHECK(manifest["counts"]["test"] == stored.test.size());
  CHECK(manifest["concepts"]["train"] == stored.train.concept_universe().size());
  CHECK(manifest["concepts"]["test"] == stored.test.concept_universe().size());
  CHECK(manifest["concepts"]["test"] == 2);
  std::size_t hist_total = 0;
  for (const auto& [_, n] : manifest["concept_histogram"]["valid"].items()) hist_total += n.get<std::size_t>();
  CHECK(hist_total == stored.valid.size());
  // unseen-concept test split
  for (const auto& c : stored.test.concept_universe()) CHECK(stored.train.concept_universe().count(c) == 0);

  const std::string train_bytes = read_file(data / "train.jsonl");
  const std::string test_bytes = read_file(data / "test.jsonl");
  REQUIRE(run(ws.base("gen-data")).code == 0);
  CHECK(read_file(data / "train.jsonl") == train_bytes);
  CHECK(read_file(data / "test.jsonl") == test_bytes);

  auto args = ws.base("gen-data");
  args.push_back("--seed");
  args.push_back("5");
  REQUIRE(run(args).code == 0);
  CHECK(read_file(data / "train.jsonl") != train_bytes);

  const auto bad = run({"gen-data", "--config", ws.config, "--out", "/proc/coat-cannot-write"});
  CHECK(bad.code == 2);
  CHECK(bad.err.find("/proc/coat-cannot-write") != std::string::npos);
}

TEST_CASE("curriculum export needs a checkpoint for coat and re-validates") {
  Workspace ws("export");
  REQUIRE(run(ws.base("gen-data")).code == 0);

  auto random_args = ws.base("export-curriculum");
  random_args.insert(random_args.end(), {"--strategy", "random_uniform"});
  REQUIRE(run(random_args).code == 0);

  auto coat_args = ws.base("export-curriculum");
  coat_args.insert(coat_args.end(), {"--strategy", "coat"});
  const auto missing = run(coat_args);
  CHECK(missing.code == 1);
  CHECK(missing.err.find("checkpoint") != std::string::npos);

  auto train_args = ws.base("train");
  train_args.insert(train_args.end(), {"--strategy", "info_only"});
  REQUIRE(run(train_args).code == 0);
  const auto ckpt = (fs::path(ws.out) / "checkpoints/info_only/seed-0/stage1.ckpt").string();
  coat_args.insert(coat_args.end(), {"--checkpoint", ckpt});
  REQUIRE(run(coat_args).code == 0);

  const StoredData stored = load_data(Layout{ws.out});
  std::map<std::int64_t, const Sample*> by_id;
  for (const auto& s : stored.train.samples) by_id[s.id] = &s;
  const auto records = parse_curriculum(read_file(fs::path(ws.out) / "curricula/coat.jsonl"));
  CHECK(records.size() == stored.train.size());
  for (const auto& r : records) {
    CHECK(r.k >= 2);
    CHECK(r.k <= 8);
    CHECK(r.strategy == SelectionStrategy::Coat);
    const Sample& pred = *by_id.at(r.predicted_id);
    for (auto id : r.demonstration_ids) {
      CHECK(id != r.predicted_id);
      CHECK(by_id.at(id)->concept_id == pred.concept_id);
    }
  }
  const auto manifest = nlohmann::json::parse(read_file(fs::path(ws.out) / "curricula/manifest.json"));
  CHECK(manifest.contains("coat"));
  CHECK(manifest.contains("random_uniform"));
  CHECK(manifest["coat"]["records"] == records.size());

  const auto again = read_file(fs::path(ws.out) / "curricula/coat.jsonl");
  REQUIRE(run(coat_args).code == 0);
  CHECK(read_file(fs::path(ws.out) / "curricula/coat.jsonl") == again);
}

TEST_CASE("train, eval and compare compose into reports") {
  Workspace ws("pipeline");
  REQUIRE(run(ws.base("gen-data")).code == 0);
  for (const char* s : {"coat", "info_only", "random_uniform"})
    for (const char* seed : {"0", "1"}) {
      auto args = ws.base("train");
      args.insert(args.end(), {"--strategy", s, "--seed", seed});
      REQUIRE(run(args).code == 0);
    }
  const fs::path run_dir = fs::path(ws.out) / "checkpoints/coat/seed-0";
  CHECK(fs::exists(run_dir / "stage1.ckpt"));
  CHECK(fs::exists(run_dir / "stage1.csv"));
  const auto ck_manifest = nlohmann::json::parse(read_file(fs::path(ws.out) / "checkpoints/manifest.json"));
  CHECK(ck_manifest.contains("coat/seed-1"));

  auto eval_args = ws.base("eval");
  eval_args.insert(eval_args.end(), {"--strategy", "coat"});
  const auto ev = run(eval_args);
  REQUIRE(ev.code == 0);
  const fs::path outcomes = fs::path(ws.out) / "reports/eval/coat-seed-0.outcomes.jsonl";
  REQUIRE(fs::exists(outcomes));
  CHECK(fs::exists(fs::path(ws.out) / "reports/eval/coat-seed-0.report.jsonl"));
  for (const auto& o : parse_outcomes(read_file(outcomes))) CHECK(o.k == 3);

  eval_args.insert(eval_args.end(), {"--k-shots", "5"});
  REQUIRE(run(eval_args).code == 0);
  for (const auto& o : parse_outcomes(read_file(outcomes))) CHECK(o.k <= 5);

  const auto cmp = run(ws.base("compare"));
  REQUIRE(cmp.code == 0);
  const auto reports = parse_reports(read_file(fs::path(ws.out) / "reports/compare/comparison.jsonl"));
  REQUIRE(reports.size() == 3);
  CHECK(reports[0].label == "coat");
  CHECK(reports[1].label == "info_only");
  CHECK(reports[2].label == "random_uniform");
  for (const auto& r : reports) CHECK(r.per_seed.size() == 2);
  CHECK(cmp.out.find("random_uniform") != std::string::npos);

  auto missing = ws.base("compare");
  missing.insert(missing.end(), {"--seed", "7"});
  const auto m = run(missing);
  CHECK(m.code == 2);
  CHECK(m.err.find("seed-7") != std::string::npos);
}

TEST_CASE("two-stage training from the command line") {
  Workspace ws("stages");
  REQUIRE(run(ws.base("gen-data")).code == 0);
  auto args = ws.base("train");
  args.insert(args.end(), {"--strategy", "info_only", "--stage", "2"});
  CHECK(run(args).code == 2);  // no stage-1 checkpoint yet

  args = ws.base("train");
  args.insert(args.end(), {"--strategy", "info_only", "--stage", "both"});
  REQUIRE(run(args).code == 0);
  const fs::path dir = fs::path(ws.out) / "checkpoints/info_only/seed-0";
  CHECK(fs::exists(dir / "stage2.ckpt"));
  const auto s1 = load_checkpoint(dir / "stage1.ckpt");
  const auto s2 = load_checkpoint(dir / "stage2.ckpt");
  CHECK(s2.optimizer.step > s1.optimizer.step);
  CHECK(Layout{ws.out}.final_checkpoint(SelectionStrategy::InfoOnly, 0) == dir / "stage2.ckpt");

  const std::string before = read_file(dir / "stage2.ckpt");
  args = ws.base("train");
  args.insert(args.end(), {"--strategy", "info_only", "--stage", "2"});
  REQUIRE(run(args).code == 0);
  CHECK(read_file(dir / "stage2.ckpt") == before);
}

TEST_CASE("usage, help and exit codes") {
  for (const char* cmd : {"gen-data", "export-curriculum", "train", "eval", "compare"}) {
    const auto h = run({cmd, "--help"});
    CHECK(h.code == 0);
    CHECK(h.out.find("--out") != std::string::npos);
  }
  CHECK(run({"--help"}).code == 0);
  CHECK(run({}).code == 1);
  CHECK(run({"frobnicate"}).code == 1);
  CHECK(run({"train", "--strategy", "best"}).code == 1);
  CHECK(run({"train", "--stage", "3"}).code == 1);

  TempDir dir("usage");
  const auto cfg = (dir.path / "bad.json").string();
  write_file(cfg, R"({"trainer": {"learning_rat": 0.1}})");
  const auto bad = run({"gen-data", "--config", cfg, "--out", (dir.path / "o").string()});
  CHECK(bad.code == 1);
  CHECK(bad.err.find("trainer.learning_rat") != std::string::npos);
  CHECK(count_lines(bad.err) == 1);
  CHECK(run({"gen-data", "--config", (dir.path / "absent.json").string()}).code == 1);
  CHECK(run({"eval", "--out", (dir.path / "empty").string()}).code == 2);
}
