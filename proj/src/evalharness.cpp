#include "coat/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "coat/errors.hpp"
#include "coat/io.hpp"
#include "coat/rng.hpp"
#include "coat/scoring.hpp"

namespace coat {

namespace {

using json = nlohmann::ordered_json;

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t eol = text.find('\n', pos);
    out.push_back(text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos));
    pos = eol == std::string_view::npos ? text.size() : eol + 1;
  }
  return out;
}

std::string percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * fraction);
  return buf;
}

}  // namespace

std::string_view demo_source_name(DemoSource s) noexcept {
  return s == DemoSource::SameConcept ? "same_concept" : "random";
}

std::optional<DemoSource> parse_demo_source(std::string_view name) noexcept {
  if (name == "same_concept") return DemoSource::SameConcept;
  if (name == "random") return DemoSource::Random;
  return std::nullopt;
}

void EvalConfig::validate() const {
  if (k_shots < 0) throw ConfigError("k_shots must be non-negative");
  if (k_shots > static_cast<int>(kMaxDemonstrations)) throw ConfigError("k_shots must be at most 8");
  if (n_seeds < 1) throw ConfigError("n_seeds must be at least 1");
  if (max_new_tokens < 1) throw ConfigError("max_new_tokens must be at least 1");
}

double sign_test_p(int wins, int n) {
  if (n < 0 || wins < 0 || wins > n) throw InvalidArgument("sign_test_p: need 0 <= wins <= n");
  double p = 0.0;
  for (int i = wins; i <= n; ++i) p += std::exp(std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0));
  return std::min(1.0, p * std::pow(0.5, n));
}

double mean(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

EvalResult evaluate(const TinyLM<float>& m, const Vocabulary& v, const Dataset& test, const Dataset& demo_source,
                    const EvalConfig& cfg, std::uint64_t eval_seed) {
  cfg.validate();
  std::map<std::string, std::vector<const Sample*>, std::less<>> by_concept;
  for (const Sample& s : demo_source.samples) by_concept[s.concept_id].push_back(&s);

  EvalResult result;
  for (std::size_t i = 0; i < test.samples.size(); ++i) {
    const Sample& s = test.samples[i];
    std::vector<const Sample*> candidates;
    if (cfg.source == DemoSource::SameConcept) {
      if (const auto it = by_concept.find(s.concept_id); it != by_concept.end()) candidates = it->second;
    } else {
      for (const Sample& c : demo_source.samples) candidates.push_back(&c);
    }
    std::erase_if(candidates, [&](const Sample* c) { return c->id == s.id || c->input == s.input; });
    if (cfg.k_shots > 0 && candidates.empty()) {
      ++result.report.excluded;
      continue;
    }
    const auto k = std::min(static_cast<std::size_t>(cfg.k_shots), candidates.size());
    Rng rng(derive_seed(eval_seed, "eval-demos", i));
    rng.partial_shuffle(candidates, k);
    candidates.resize(k);

    const PromptInstance prompt = make_prompt(candidates, s);
    const auto ids = tokenize_for_generation(v, prompt);
    const int room = m.config.max_seq_len - static_cast<int>(ids.size());
    if (room < 1) throw InvalidArgument("evaluation prompt for sample " + std::to_string(s.id) + " exceeds max_seq_len");
    const auto out = greedy_decode(m, ids, std::min(cfg.max_new_tokens, room));

    SampleOutcome o;
    o.sample_id = s.id;
    o.concept_id = s.concept_id;
    o.k = static_cast<int>(k);
    for (const Sample* c : candidates) o.demo_ids.push_back(c->id);
    o.prediction = detokenize(v, out);
    o.gold = s.target;
    o.correct = normalize_ws(o.prediction) == normalize_ws(o.gold);
    o.target_likelihood = target_likelihood(m, v, prompt).value;
    result.outcomes.push_back(std::move(o));
  }
  const auto excluded = result.report.excluded;
  result.report = summarize(result.outcomes, "");
  result.report.excluded = excluded;
  result.report.per_seed = {result.report.accuracy};
  result.report.k_shots = cfg.k_shots;
  result.report.demo_source = std::string(demo_source_name(cfg.source));
  return result;
}

EvalReport summarize(const std::vector<SampleOutcome>& outcomes, std::string label) {
  EvalReport r;
  r.label = std::move(label);
  double lik = 0.0;
  for (const auto& o : outcomes) {
    ++r.total;
    auto& tally = r.per_concept[o.concept_id];
    ++tally.total;
    if (o.correct) {
      ++r.correct;
      ++tally.correct;
    }
    lik += o.target_likelihood;
  }
  r.accuracy = r.total ? static_cast<double>(r.correct) / static_cast<double>(r.total) : 0.0;
  r.mean_target_likelihood = r.total ? lik / static_cast<double>(r.total) : 0.0;
  return r;
}

std::string outcomes_to_jsonl(const std::vector<SampleOutcome>& outcomes) {
  std::string out;
  for (const auto& o : outcomes) {
    json j;
    j["sample_id"] = o.sample_id;
    j["concept"] = o.concept_id;
    j["k"] = o.k;
    j["demo_ids"] = o.demo_ids;
    j["prediction"] = o.prediction;
    j["gold"] = o.gold;
    j["correct"] = o.correct;
    j["target_likelihood"] = o.target_likelihood;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<SampleOutcome> parse_outcomes(std::string_view text) {
  std::vector<SampleOutcome> out;
  std::size_t line_no = 0;
  for (const auto line : lines_of(text)) {
    ++line_no;
    try {
      const auto j = json::parse(line);
      SampleOutcome o;
      o.sample_id = j.at("sample_id").get<std::int64_t>();
      o.concept_id = j.at("concept").get<std::string>();
      o.k = j.at("k").get<int>();
      o.demo_ids = j.at("demo_ids").get<std::vector<std::int64_t>>();
      o.prediction = j.at("prediction").get<std::string>();
      o.gold = j.at("gold").get<std::string>();
      o.correct = j.at("correct").get<bool>();
      o.target_likelihood = j.at("target_likelihood").get<double>();
      out.push_back(std::move(o));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what(), line_no);
    }
  }
  return out;
}

Comparison compare_strategies(const std::vector<LabelledModels>& models, const Dataset& test,
                              const Dataset& demo_source, const EvalConfig& cfg) {
  cfg.validate();
  Comparison cmp;
  if (models.empty()) return cmp;
  const std::size_t n_seeds = models.front().seeds.size();
  if (n_seeds == 0) throw ConfigError("label " + models.front().label + " has no checkpoints");
  const Vocabulary& vocab = models.front().seeds.front()->vocab;
  for (const auto& lm : models) {
    if (lm.seeds.size() != n_seeds) throw ConfigError("label " + lm.label + " has a different number of seeds");
    for (const Checkpoint* c : lm.seeds)
      if (!(c->vocab == vocab)) throw ConfigError("label " + lm.label + " uses a different vocabulary");
  }

  for (const auto& lm : models) {
    std::vector<SampleOutcome> all;
    std::vector<double> per_seed;
    std::int64_t excluded = 0;
    for (std::size_t s = 0; s < n_seeds; ++s) {
      auto r = evaluate(lm.seeds[s]->model, vocab, test, demo_source, cfg, derive_seed(cfg.seed, "eval-seed", s));
      per_seed.push_back(r.report.accuracy);
      excluded += r.report.excluded;
      all.insert(all.end(), r.outcomes.begin(), r.outcomes.end());
    }
    EvalReport rep = summarize(all, lm.label);
    rep.per_seed = per_seed;
    rep.excluded = excluded;
    rep.k_shots = cfg.k_shots;
    rep.demo_source = std::string(demo_source_name(cfg.source));
    cmp.reports.push_back(std::move(rep));
    cmp.outcomes.push_back(std::move(all));
  }
  for (std::size_t a = 0; a < cmp.reports.size(); ++a) {
    for (std::size_t b = a + 1; b < cmp.reports.size(); ++b) {
      PairwiseDelta d;
      d.first = cmp.reports[a].label;
      d.second = cmp.reports[b].label;
      d.seeds = static_cast<int>(n_seeds);
      d.delta = mean(cmp.reports[a].per_seed) - mean(cmp.reports[b].per_seed);
      for (std::size_t s = 0; s < n_seeds; ++s) d.wins += cmp.reports[a].per_seed[s] > cmp.reports[b].per_seed[s];
      d.sign_test_p = sign_test_p(d.wins, d.seeds);
      cmp.deltas.push_back(d);
    }
  }
  return cmp;
}

RenderedReport report_render(const std::vector<EvalReport>& reports, const std::vector<PairwiseDelta>& deltas) {
  RenderedReport out;
  char buf[512];
  std::snprintf(buf, sizeof buf, "%-16s %8s %8s %8s %6s %13s %10s\n", "strategy", "acc(%)", "min(%)", "max(%)",
                "seeds", "correct/total", "mean_lik");
  out.text += buf;
  for (const auto& r : reports) {
    const auto [lo, hi] = r.per_seed.empty() ? std::pair{r.accuracy, r.accuracy}
                                             : std::pair{*std::min_element(r.per_seed.begin(), r.per_seed.end()),
                                                         *std::max_element(r.per_seed.begin(), r.per_seed.end())};
    const std::string counts = std::to_string(r.correct) + "/" + std::to_string(r.total);
    std::snprintf(buf, sizeof buf, "%-16s %8s %8s %8s %6zu %13s %10.3g\n", r.label.c_str(), percent(r.accuracy).c_str(),
                  percent(lo).c_str(), percent(hi).c_str(), r.per_seed.size(), counts.c_str(),
                  r.mean_target_likelihood);
    out.text += buf;

    json j;
    j["type"] = "report";
    j["label"] = r.label;
    j["correct"] = r.correct;
    j["total"] = r.total;
    j["accuracy"] = r.accuracy;
    j["excluded"] = r.excluded;
    json concepts = json::object();
    for (const auto& [c, t] : r.per_concept) concepts[c] = {{"correct", t.correct}, {"total", t.total}};
    j["per_concept"] = concepts;
    j["per_seed"] = r.per_seed;
    j["mean_target_likelihood"] = r.mean_target_likelihood;
    j["k_shots"] = r.k_shots;
    j["demo_source"] = r.demo_source;
    out.jsonl += j.dump() + "\n";
  }
  if (!deltas.empty()) {
    out.text += "\n";
    std::snprintf(buf, sizeof buf, "%-32s %9s %9s %9s\n", "comparison", "delta", "wins", "sign_p");
    out.text += buf;
  }
  for (const auto& d : deltas) {
    const std::string pair = d.first + " vs " + d.second;
    const std::string wins = std::to_string(d.wins) + "/" + std::to_string(d.seeds);
    std::snprintf(buf, sizeof buf, "%-32s %+9.1f %9s %9.3f\n", pair.c_str(), 100.0 * d.delta, wins.c_str(),
                  d.sign_test_p);
    out.text += buf;
    json j;
    j["type"] = "delta";
    j["first"] = d.first;
    j["second"] = d.second;
    j["delta"] = d.delta;
    j["wins"] = d.wins;
    j["seeds"] = d.seeds;
    j["sign_test_p"] = d.sign_test_p;
    out.jsonl += j.dump() + "\n";
  }
  return out;
}

std::vector<EvalReport> parse_reports(std::string_view jsonl) {
  std::vector<EvalReport> out;
  std::size_t line_no = 0;
  for (const auto line : lines_of(jsonl)) {
    ++line_no;
    try {
      const auto j = json::parse(line);
      if (j.at("type") != "report") continue;
      EvalReport r;
      r.label = j.at("label").get<std::string>();
      r.correct = j.at("correct").get<std::int64_t>();
      r.total = j.at("total").get<std::int64_t>();
      r.accuracy = j.at("accuracy").get<double>();
      r.excluded = j.at("excluded").get<std::int64_t>();
      for (const auto& [c, t] : j.at("per_concept").items())
        r.per_concept[c] = {t.at("correct").get<std::int64_t>(), t.at("total").get<std::int64_t>()};
      r.per_seed = j.at("per_seed").get<std::vector<double>>();
      r.mean_target_likelihood = j.at("mean_target_likelihood").get<double>();
      r.k_shots = j.at("k_shots").get<std::int64_t>();
      r.demo_source = j.at("demo_source").get<std::string>();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what(), line_no);
    }
  }
  return out;
}

}  // namespace coat
