#include "coat/pipeline.hpp"

#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <type_traits>

#include "coat/errors.hpp"
#include "coat/io.hpp"
#include "coat/rng.hpp"
#include "coat/scoring.hpp"

namespace coat {

namespace fs = std::filesystem;

namespace {

using json = nlohmann::ordered_json;

// Strict reader over one JSON object. Every accessor marks its key as
// consumed; finish() rejects whatever was not consumed.
class Section {
 public:
  Section(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where("") + "expected an object");
  }

  template <typename T>
  void read(const char* key, T& field) {
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    seen_.insert(key);
    const std::string name = where(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw ConfigError(name + "expected a boolean");
      field = it->get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer()) throw ConfigError(name + "expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (it->is_number_unsigned() || it->get<std::int64_t>() >= 0) {
          field = it->get<T>();
          return;
        }
        throw ConfigError(name + "expected a non-negative integer");
      } else {
        const auto v = it->get<std::int64_t>();
        if (v < std::numeric_limits<T>::min() || v > std::numeric_limits<T>::max())
          throw ConfigError(name + "integer out of range");
        field = static_cast<T>(v);
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) throw ConfigError(name + "expected a number");
      field = it->get<T>();
    } else {
      if (!it->is_string()) throw ConfigError(name + "expected a string");
      field = it->get<std::string>();
    }
  }

  template <typename E>
  void read_enum(const char* key, E& field, std::optional<E> (*parse)(std::string_view)) {
    std::string text;
    if (!j_.contains(key)) return;
    read(key, text);
    const auto v = parse(text);
    if (!v) throw ConfigError(where(key) + "unknown value '" + text + "'");
    field = *v;
  }

  Section child(const char* key) {
    seen_.insert(key);
    static const nlohmann::json empty = nlohmann::json::object();
    const auto it = j_.find(key);
    return Section(it == j_.end() ? empty : *it, path_.empty() ? key : path_ + "." + key);
  }

  bool has(const char* key) const { return j_.contains(key); }
  const nlohmann::json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }
  std::string where(const std::string& key) const {
    const std::string full = path_.empty() ? key : key.empty() ? path_ : path_ + "." + key;
    return full + ": ";
  }

  void finish() const {
    for (const auto& [key, _] : j_.items())
      if (!seen_.count(key)) throw ConfigError("unknown key '" + (path_.empty() ? key : path_ + "." + key) + "'");
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::optional<QuestionStyle> parse_style(std::string_view s) {
  if (s == "latent") return QuestionStyle::Latent;
  if (s == "natural") return QuestionStyle::Natural;
  return std::nullopt;
}

std::optional<SelectionStrategy> strategy_of(std::string_view s) { return parse_strategy(s); }
std::optional<DemoSource> source_of(std::string_view s) { return parse_demo_source(s); }
std::optional<StageSelection> stage_of(std::string_view s) { return parse_stage(s); }

std::string seed_dir(std::uint64_t seed) { return "seed-" + std::to_string(seed); }

json read_manifest(const fs::path& path) {
  if (!fs::exists(path)) return json::object();
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": malformed manifest: " + e.what());
  }
}

// Each stage directory keeps one manifest; entries are keyed so commands
// touching different artifacts do not overwrite each other.
void update_manifest(const fs::path& dir, const std::string& key, json entry) {
  const fs::path path = dir / "manifest.json";
  json m = read_manifest(path);
  m[key] = std::move(entry);
  write_file(path, m.dump(2) + "\n");
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError(dir.string() + ": cannot create directory");
}

json histogram_json(const Dataset& d) {
  json h = json::object();
  for (const auto& [concept_id, n] : d.concept_histogram()) h[concept_id] = n;
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Dataset load_split(const fs::path& path, Split split) {
  Dataset d = ingest_jsonl(path);
  d.split = split;
  return d;
}

json config_json(const RunConfig& cfg) { return json::parse(run_config_to_json(cfg).dump()); }

TrainConfig train_config(const RunConfig& cfg, std::string_view stage) {
  TrainConfig tc = cfg.trainer;
  tc.seed = derive_seed(cfg.seed, "train", stage == "1" ? 1 : 2);
  return tc;
}

}  // namespace

std::string_view stage_name(StageSelection s) noexcept {
  switch (s) {
    case StageSelection::First: return "1";
    case StageSelection::Second: return "2";
    case StageSelection::Both: return "both";
  }
  return "";
}

std::optional<StageSelection> parse_stage(std::string_view name) noexcept {
  if (name == "1") return StageSelection::First;
  if (name == "2") return StageSelection::Second;
  if (name == "both") return StageSelection::Both;
  return std::nullopt;
}

RunConfig::RunConfig() {
  model.n_layers = 2;
  model.d_model = 64;
  model.n_heads = 4;
  model.d_ff = 256;
  model.max_seq_len = 256;
  trainer = TrainConfig::desk();
  trainer.learning_rate = 1e-3;
  trainer.max_steps = 3000;
  trainer.eval_interval = 250;
  trainer.patience = 4;
}

void RunConfig::validate() const {
  if (data.n_samples < 1 || data.n_concepts < 1) throw ConfigError("data: n_samples and n_concepts must be positive");
  if (!(data.test_fraction > 0.0 && data.test_fraction < 1.0))
    throw ConfigError("data.test_fraction must lie in (0, 1)");
  if (!(data.valid_fraction > 0.0 && data.valid_fraction < 1.0))
    throw ConfigError("data.valid_fraction must lie in (0, 1)");
  if (data.natural_samples < 0 || data.natural_chains < 1)
    throw ConfigError("data: natural_samples must be non-negative and natural_chains positive");
  try {
    data.generator.validate();
    ModelConfig m = model;
    m.vocab_size = 1;
    m.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  trainer.validate();
  eval.validate();
  if (compare.empty()) throw ConfigError("compare must name at least one strategy");
  if (stage != StageSelection::First && data.natural_samples == 0)
    throw ConfigError("stage 2 requires data.natural_samples > 0");
}

RunConfig parse_run_config(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig cfg;
  Section root(j, "");
  root.read("seed", cfg.seed);
  std::string out = cfg.out.string();
  root.read("out", out);
  cfg.out = out;
  root.read_enum("stage", cfg.stage, stage_of);

  auto data = root.child("data");
  data.read("n_samples", cfg.data.n_samples);
  data.read("n_concepts", cfg.data.n_concepts);
  data.read("test_fraction", cfg.data.test_fraction);
  data.read("valid_fraction", cfg.data.valid_fraction);
  data.read("natural_samples", cfg.data.natural_samples);
  data.read("natural_chains", cfg.data.natural_chains);
  auto gen = data.child("generator");
  GeneratorConfig& g = cfg.data.generator;
  gen.read("min_rows", g.min_rows);
  gen.read("max_rows", g.max_rows);
  gen.read("max_value", g.max_value);
  gen.read("max_depth", g.max_depth);
  gen.read("min_threshold", g.min_threshold);
  gen.read("max_threshold", g.max_threshold);
  gen.read("max_retries", g.max_retries);
  gen.read("entity_names", g.entity_names);
  gen.read_enum("style", g.style, parse_style);
  gen.finish();
  data.finish();

  auto model = root.child("model");
  model.read("n_layers", cfg.model.n_layers);
  model.read("d_model", cfg.model.d_model);
  model.read("n_heads", cfg.model.n_heads);
  model.read("d_ff", cfg.model.d_ff);
  model.read("max_seq_len", cfg.model.max_seq_len);
  model.read("dropout", cfg.model.dropout);
  model.finish();

  auto tr = root.child("trainer");
  TrainConfig& t = cfg.trainer;
  tr.read_enum("strategy", t.strategy, strategy_of);
  tr.read("learning_rate", t.learning_rate);
  tr.read("batch_size", t.batch_size);
  tr.read("max_steps", t.max_steps);
  tr.read("patience", t.patience);
  tr.read("eval_interval", t.eval_interval);
  tr.read("pool_size", t.pool_size);
  tr.read("scorer_refresh", t.scorer_refresh);
  tr.read("grad_clip", t.grad_clip);
  tr.finish();

  auto ev = root.child("eval");
  ev.read("k_shots", cfg.eval.k_shots);
  ev.read_enum("demo_source", cfg.eval.source, source_of);
  ev.read("n_seeds", cfg.eval.n_seeds);
  ev.read("max_new_tokens", cfg.eval.max_new_tokens);
  ev.finish();

  if (root.has("compare")) {
    const auto& list = root.raw("compare");
    if (!list.is_array()) throw ConfigError("compare: expected an array of strategy names");
    cfg.compare.clear();
    for (const auto& item : list) {
      const auto s = item.is_string() ? parse_strategy(item.get<std::string>()) : std::nullopt;
      if (!s) throw ConfigError("compare: unknown strategy " + item.dump());
      cfg.compare.push_back(*s);
    }
  }
  root.finish();
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const fs::path& path) { return parse_run_config(read_file(path)); }

nlohmann::json run_config_to_json(const RunConfig& cfg) {
  const GeneratorConfig& g = cfg.data.generator;
  const TrainConfig& t = cfg.trainer;
  nlohmann::json compare = nlohmann::json::array();
  for (auto s : cfg.compare) compare.push_back(std::string(strategy_name(s)));
  return {
      {"seed", cfg.seed},
      {"out", cfg.out.string()},
      {"stage", std::string(stage_name(cfg.stage))},
      {"data",
       {{"n_samples", cfg.data.n_samples},
        {"n_concepts", cfg.data.n_concepts},
        {"test_fraction", cfg.data.test_fraction},
        {"valid_fraction", cfg.data.valid_fraction},
        {"natural_samples", cfg.data.natural_samples},
        {"natural_chains", cfg.data.natural_chains},
        {"generator",
         {{"min_rows", g.min_rows},
          {"max_rows", g.max_rows},
          {"max_value", g.max_value},
          {"max_depth", g.max_depth},
          {"min_threshold", g.min_threshold},
          {"max_threshold", g.max_threshold},
          {"max_retries", g.max_retries},
          {"entity_names", g.entity_names},
          {"style", g.style == QuestionStyle::Latent ? "latent" : "natural"}}}}},
      {"model",
       {{"n_layers", cfg.model.n_layers},
        {"d_model", cfg.model.d_model},
        {"n_heads", cfg.model.n_heads},
        {"d_ff", cfg.model.d_ff},
        {"max_seq_len", cfg.model.max_seq_len},
        {"dropout", cfg.model.dropout}}},
      {"trainer",
       {{"strategy", std::string(strategy_name(t.strategy))},
        {"learning_rate", t.learning_rate},
        {"batch_size", t.batch_size},
        {"max_steps", t.max_steps},
        {"patience", t.patience},
        {"eval_interval", t.eval_interval},
        {"pool_size", t.pool_size},
        {"scorer_refresh", t.scorer_refresh},
        {"grad_clip", t.grad_clip}}},
      {"eval",
       {{"k_shots", cfg.eval.k_shots},
        {"demo_source", std::string(demo_source_name(cfg.eval.source))},
        {"n_seeds", cfg.eval.n_seeds},
        {"max_new_tokens", cfg.eval.max_new_tokens}}},
      {"compare", compare},
  };
}

void write_config_snapshot(const RunConfig& cfg) {
  ensure_dir(cfg.out);
  write_file(Layout{cfg.out}.config_snapshot(), config_json(cfg).dump(2) + "\n");
}

fs::path Layout::run_dir(SelectionStrategy s, std::uint64_t seed) const {
  return checkpoints() / std::string(strategy_name(s)) / seed_dir(seed);
}

fs::path Layout::final_checkpoint(SelectionStrategy s, std::uint64_t seed) const {
  const fs::path dir = run_dir(s, seed);
  if (fs::exists(dir / "stage2.ckpt")) return dir / "stage2.ckpt";
  return dir / "stage1.ckpt";
}

StoredData load_data(const Layout& layout) {
  const fs::path dir = layout.data();
  if (!fs::exists(dir / "manifest.json")) throw IoError(dir.string() + ": no generated data (run gen-data first)");
  StoredData d;
  d.train = load_split(dir / "train.jsonl", Split::Train);
  d.valid = load_split(dir / "valid.jsonl", Split::Validation);
  d.test = load_split(dir / "test.jsonl", Split::Test);
  if (fs::exists(dir / "natural_train.jsonl")) {
    d.natural_train = load_split(dir / "natural_train.jsonl", Split::Train);
    d.natural_valid = load_split(dir / "natural_valid.jsonl", Split::Validation);
  }
  d.vocab = Vocabulary::load(dir / "vocab.txt");
  return d;
}

StoredData gen_data(const RunConfig& cfg) {
  cfg.validate();
  const Layout layout{cfg.out};
  ensure_dir(layout.data());

  StoredData d;
  const Dataset all = gen_dataset(cfg.data.n_samples, cfg.data.n_concepts, derive_seed(cfg.seed, "data"),
                                  cfg.data.generator);
  Dataset seen;
  std::tie(seen, d.test) = split_unseen_concepts(all, cfg.data.test_fraction, derive_seed(cfg.seed, "split"));
  std::tie(d.train, d.valid) = split_validation(seen, cfg.data.valid_fraction, derive_seed(cfg.seed, "valid"));
  d.train.split = Split::Train;
  d.valid.split = Split::Validation;
  d.test.split = Split::Test;

  std::vector<const Dataset*> sources{&d.train, &d.valid, &d.test};
  if (cfg.data.natural_samples > 0) {
    const Dataset natural = gen_natural_dataset(cfg.data.natural_samples, cfg.data.natural_chains,
                                                derive_seed(cfg.seed, "natural"), cfg.data.generator);
    std::tie(d.natural_train, d.natural_valid) =
        split_validation(natural, cfg.data.valid_fraction, derive_seed(cfg.seed, "natural_valid"));
    sources.push_back(&d.natural_train);
    sources.push_back(&d.natural_valid);
  }
  d.vocab = build_vocab(sources);

  json files = json::object(), counts = json::object(), concepts = json::object(), histogram = json::object();
  auto put = [&](const std::string& name, const Dataset& ds) {
    write_jsonl(ds, layout.data() / (name + ".jsonl"));
    files[name] = name + ".jsonl";
    counts[name] = ds.size();
    concepts[name] = ds.concept_universe().size();
    histogram[name] = histogram_json(ds);
  };
  put("train", d.train);
  put("valid", d.valid);
  put("test", d.test);
  if (cfg.data.natural_samples > 0) {
    put("natural_train", d.natural_train);
    put("natural_valid", d.natural_valid);
  }
  d.vocab.save(layout.data() / "vocab.txt");

  json manifest;
  manifest["seed"] = cfg.seed;
  manifest["files"] = files;
  manifest["vocab"] = {{"file", "vocab.txt"}, {"size", d.vocab.size()}};
  manifest["counts"] = counts;
  manifest["concepts"] = concepts;
  manifest["concept_histogram"] = histogram;
  manifest["config"] = config_json(cfg);
  write_file(layout.data() / "manifest.json", manifest.dump(2) + "\n");
  return d;
}

ExportSummary export_curriculum(const RunConfig& cfg, SelectionStrategy strategy,
                                const std::optional<fs::path>& checkpoint) {
  cfg.validate();
  if (strategy == SelectionStrategy::Coat && !checkpoint)
    throw ConfigError("export-curriculum: strategy coat needs --checkpoint to score with");
  const Layout layout{cfg.out};
  const StoredData d = load_data(layout);
  std::optional<Checkpoint> ck;
  std::optional<ModelScorer<float>> scorer;
  if (checkpoint) {
    ck = load_checkpoint(*checkpoint);
    scorer.emplace(ck->model, ck->vocab);
  }

  TrainConfig tc = cfg.trainer;
  tc.strategy = strategy;
  const ConceptIndex idx(d.train);
  std::vector<CurriculumRecord> records;
  ExportSummary summary;
  std::map<int, std::size_t> k_hist;
  for (std::size_t i = 0; i < d.train.samples.size(); ++i) {
    const Sample& pred = d.train.samples[i];
    try {
      const auto inst = build_training_instance(d.train, idx, pred, tc, scorer ? &*scorer : nullptr,
                                                derive_seed(cfg.seed, "export", i));
      records.push_back(make_curriculum_record(inst.demonstrations, pred, strategy));
      ++k_hist[records.back().k];
    } catch (const NoDemonstrations&) {
      ++summary.skipped;
    }
  }
  ensure_dir(layout.curricula());
  const std::string name = std::string(strategy_name(strategy));
  summary.file = layout.curricula() / (name + ".jsonl");
  summary.records = records.size();
  write_file(summary.file, curriculum_to_jsonl(records));

  json hist = json::object();
  for (const auto& [k, n] : k_hist) hist[std::to_string(k)] = n;
  json entry;
  entry["file"] = name + ".jsonl";
  entry["records"] = summary.records;
  entry["skipped"] = summary.skipped;
  entry["k_histogram"] = hist;
  entry["checkpoint"] = checkpoint ? checkpoint->string() : "";
  entry["seed"] = cfg.seed;
  entry["config"] = config_json(cfg);
  update_manifest(layout.curricula(), name, entry);
  return summary;
}

std::vector<StageResult> train_run(const RunConfig& cfg, const InstanceObserver& observer) {
  cfg.validate();
  const Layout layout{cfg.out};
  const StoredData d = load_data(layout);
  const SelectionStrategy strategy = cfg.trainer.strategy;
  const fs::path dir = layout.run_dir(strategy, cfg.seed);
  ensure_dir(dir);

  std::vector<StageResult> results;
  auto save = [&](int stage, const StageResult& r) {
    const std::string base = "stage" + std::to_string(stage);
    save_checkpoint(dir / (base + ".ckpt"), r.checkpoint);
    write_file(dir / (base + ".csv"), r.log.to_csv());
  };
  if (cfg.stage != StageSelection::Second) {
    ModelConfig mc = cfg.model;
    const Checkpoint start =
        initial_checkpoint(mc, d.vocab, cfg.trainer.learning_rate, derive_seed(cfg.seed, "init"));
    results.push_back(train_two_stage(start, {d.train, d.valid}, nullptr, train_config(cfg, "1"),
                                      train_config(cfg, "1"), observer)
                          .front());
    save(1, results.back());
    std::error_code ec;
    fs::remove(dir / "stage2.ckpt", ec);
    fs::remove(dir / "stage2.csv", ec);
  }
  if (cfg.stage != StageSelection::First) {
    if (d.natural_train.empty()) throw ConfigError("stage 2 needs natural-proxy data (data.natural_samples > 0)");
    const Checkpoint from = results.empty() ? load_checkpoint(dir / "stage1.ckpt") : results.back().checkpoint;
    try {
      results.push_back(train_stage(from, d.natural_train, d.natural_valid, train_config(cfg, "2"), observer));
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("stage 2: ") + e.what());
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(std::string("stage 2: ") + e.what());
    }
    save(2, results.back());
  }

  json stages = json::array();
  int stage = cfg.stage == StageSelection::Second ? 2 : 1;
  for (const auto& r : results) {
    stages.push_back({{"stage", stage},
                      {"checkpoint", "stage" + std::to_string(stage) + ".ckpt"},
                      {"log", "stage" + std::to_string(stage) + ".csv"},
                      {"chosen_step", r.log.chosen_step},
                      {"steps_run", r.log.steps_run},
                      {"skipped", r.log.skipped},
                      {"best_valid_loss", r.log.records.empty() ? 0.0 : [&] {
                         double best = r.log.records.front().valid_loss;
                         for (const auto& rec : r.log.records) best = std::min(best, rec.valid_loss);
                         return best;
                       }()},
                      {"parameter_checksum", hex64(parameter_checksum(r.checkpoint.model))}});
    ++stage;
  }
  json entry;
  entry["strategy"] = std::string(strategy_name(strategy));
  entry["seed"] = cfg.seed;
  entry["stages"] = stages;
  entry["config"] = config_json(cfg);
  update_manifest(layout.checkpoints(), std::string(strategy_name(strategy)) + "/" + seed_dir(cfg.seed), entry);
  return results;
}

EvalResult eval_run(const RunConfig& cfg) {
  cfg.validate();
  const Layout layout{cfg.out};
  const StoredData d = load_data(layout);
  const SelectionStrategy strategy = cfg.trainer.strategy;
  const fs::path ckpt = layout.final_checkpoint(strategy, cfg.seed);
  const Checkpoint ck = load_checkpoint(ckpt);
  EvalResult r = evaluate(ck.model, ck.vocab, d.test, d.test, cfg.eval, derive_seed(cfg.seed, "eval"));
  r.report.label = std::string(strategy_name(strategy));
  r.report.per_seed = {r.report.accuracy};

  const fs::path dir = layout.reports() / "eval";
  ensure_dir(dir);
  const std::string base = r.report.label + "-" + seed_dir(cfg.seed);
  const auto rendered = report_render({r.report});
  write_file(dir / (base + ".outcomes.jsonl"), outcomes_to_jsonl(r.outcomes));
  write_file(dir / (base + ".report.jsonl"), rendered.jsonl);
  write_file(dir / (base + ".txt"), rendered.text);

  json entry;
  entry["checkpoint"] = fs::relative(ckpt, layout.root).string();
  entry["outcomes"] = "eval/" + base + ".outcomes.jsonl";
  entry["report"] = "eval/" + base + ".report.jsonl";
  entry["accuracy"] = r.report.accuracy;
  entry["k_shots"] = cfg.eval.k_shots;
  entry["config"] = config_json(cfg);
  update_manifest(layout.reports(), "eval/" + base, entry);
  return r;
}

Comparison compare_run(const RunConfig& cfg) {
  cfg.validate();
  const Layout layout{cfg.out};
  const StoredData d = load_data(layout);
  std::vector<std::vector<Checkpoint>> owned(cfg.compare.size());
  std::vector<LabelledModels> models;
  for (std::size_t i = 0; i < cfg.compare.size(); ++i) {
    for (int s = 0; s < cfg.eval.n_seeds; ++s)
      owned[i].push_back(load_checkpoint(layout.final_checkpoint(cfg.compare[i], cfg.seed + s)));
    LabelledModels lm{std::string(strategy_name(cfg.compare[i])), {}};
    for (const auto& c : owned[i]) lm.seeds.push_back(&c);
    models.push_back(std::move(lm));
  }
  EvalConfig ec = cfg.eval;
  ec.seed = derive_seed(cfg.seed, "eval");
  Comparison cmp = compare_strategies(models, d.test, d.test, ec);

  const fs::path dir = layout.reports() / "compare";
  ensure_dir(dir);
  const auto rendered = report_render(cmp.reports, cmp.deltas);
  write_file(dir / "comparison.txt", rendered.text);
  write_file(dir / "comparison.jsonl", rendered.jsonl);
  json outcome_files = json::object();
  for (std::size_t i = 0; i < cmp.reports.size(); ++i) {
    const std::string file = cmp.reports[i].label + ".outcomes.jsonl";
    write_file(dir / file, outcomes_to_jsonl(cmp.outcomes[i]));
    outcome_files[cmp.reports[i].label] = "compare/" + file;
  }
  json seeds = json::array();
  for (int s = 0; s < cfg.eval.n_seeds; ++s) seeds.push_back(cfg.seed + s);
  json entry;
  entry["report"] = "compare/comparison.jsonl";
  entry["table"] = "compare/comparison.txt";
  entry["outcomes"] = outcome_files;
  entry["seeds"] = seeds;
  entry["config"] = config_json(cfg);
  update_manifest(layout.reports(), "compare", entry);
  return cmp;
}

}  // namespace coat
