#include "coat/sampler.hpp"

#include <algorithm>
#include <numeric>

#include <nlohmann/json.hpp>

#include "coat/errors.hpp"
#include "coat/rng.hpp"

namespace coat {

namespace {

constexpr std::string_view kStrategyNames[] = {"coat", "info_only", "random_uniform"};

}  // namespace

ConceptIndex::ConceptIndex(const Dataset& d) : dataset_(&d) {
  if (d.empty()) throw InvalidArgument("build_index: dataset is empty");
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    const Sample& s = d.samples[i];
    if (!position_.emplace(s.id, i).second) throw InvalidArgument("duplicate sample id " + std::to_string(s.id));
    groups_[s.concept_id].push_back(s.id);
  }
  for (auto& [_, ids] : groups_) std::sort(ids.begin(), ids.end());
}

const std::vector<std::int64_t>& ConceptIndex::lookup(std::string_view concept_id) const {
  static const std::vector<std::int64_t> kNone;
  const auto it = groups_.find(concept_id);
  return it == groups_.end() ? kNone : it->second;
}

const Sample& ConceptIndex::sample(std::int64_t id) const {
  const auto it = position_.find(id);
  if (it == position_.end()) throw InvalidArgument("unknown sample id " + std::to_string(id));
  return dataset_->samples[it->second];
}

ConceptIndex build_index(const Dataset& d) { return ConceptIndex(d); }

std::string_view strategy_name(SelectionStrategy s) noexcept { return kStrategyNames[static_cast<std::size_t>(s)]; }

std::optional<SelectionStrategy> parse_strategy(std::string_view name) noexcept {
  for (std::size_t i = 0; i < std::size(kStrategyNames); ++i)
    if (kStrategyNames[i] == name) return static_cast<SelectionStrategy>(i);
  return std::nullopt;
}

CandidatePool informative_pool(const ConceptIndex& idx, const Sample& predicted, std::size_t pool_size,
                               std::uint64_t seed) {
  if (pool_size < 1) throw InvalidArgument("pool_size must be positive");
  std::vector<const Sample*> eligible;
  for (std::int64_t id : idx.lookup(predicted.concept_id)) {
    const Sample& s = idx.sample(id);
    if (s.id != predicted.id && s.input != predicted.input) eligible.push_back(&s);
  }
  if (eligible.empty())
    throw NoDemonstrations("concept \"" + predicted.concept_id + "\" has no other sample for predicted id " +
                           std::to_string(predicted.id));
  const std::size_t n = std::min(pool_size, eligible.size());
  Rng rng(seed);
  rng.partial_shuffle(eligible, n);
  eligible.resize(n);
  return {&predicted, std::move(eligible), predicted.concept_id};
}

std::vector<const Sample*> select_nontrivial(const CandidatePool& pool, Scorer& scorer, int k,
                                             std::vector<SelectionStep>* trace) {
  if (k < 1) throw InvalidArgument("k must be at least 1");
  if (pool.candidates.empty()) throw NoDemonstrations("empty candidate pool");
  std::vector<const Sample*> remaining = pool.candidates;
  std::vector<const Sample*> selected;
  PromptInstance prompt;
  prompt.predicted_input = pool.predicted->input;
  prompt.predicted_target = pool.predicted->target;
  const std::size_t steps = std::min(static_cast<std::size_t>(k), remaining.size());
  for (std::size_t step = 0; step < steps; ++step) {
    SelectionStep record;
    std::size_t best = 0;
    LikelihoodScore best_score;
    std::vector<Demonstration> options;
    options.reserve(remaining.size());
    for (const Sample* c : remaining) options.push_back({c->input, c->target});
    const auto scores = scorer.score_appended(prompt, options);
    for (std::size_t c = 0; c < remaining.size(); ++c) {
      const LikelihoodScore& s = scores[c];
      if (trace) {
        record.candidate_ids.push_back(remaining[c]->id);
        record.log_values.push_back(s.log_value);
      }
      if (c == 0 || lower_likelihood(s, best_score) ||
          (s.log_value == best_score.log_value && remaining[c]->id < remaining[best]->id)) {
        best = c;
        best_score = s;
      }
    }
    const Sample* chosen = remaining[best];
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(best));
    selected.push_back(chosen);
    prompt.demonstrations.push_back({chosen->input, chosen->target});
    if (trace) {
      record.chosen = chosen->id;
      trace->push_back(std::move(record));
    }
  }
  return selected;
}

std::vector<const Sample*> select_info_only(const CandidatePool& pool, int k, std::uint64_t seed) {
  if (k < 0) throw InvalidArgument("k must be non-negative");
  if (pool.candidates.empty()) throw NoDemonstrations("empty candidate pool");
  std::vector<const Sample*> out = pool.candidates;
  const std::size_t n = std::min(static_cast<std::size_t>(k), out.size());
  Rng rng(seed);
  rng.partial_shuffle(out, n);
  out.resize(n);
  return out;
}

std::vector<const Sample*> select_random(const Dataset& d, const Sample& predicted, int k, std::uint64_t seed) {
  if (k < 0) throw InvalidArgument("k must be non-negative");
  std::vector<const Sample*> eligible;
  eligible.reserve(d.samples.size());
  for (const Sample& s : d.samples)
    if (s.id != predicted.id && s.input != predicted.input) eligible.push_back(&s);
  if (eligible.size() < static_cast<std::size_t>(k))
    throw InvalidArgument("select_random: need " + std::to_string(k) + " demonstrations, only " +
                          std::to_string(eligible.size()) + " samples available");
  Rng rng(seed);
  rng.partial_shuffle(eligible, static_cast<std::size_t>(k));
  eligible.resize(static_cast<std::size_t>(k));
  return eligible;
}

int draw_k(std::uint64_t seed) {
  Rng rng(seed);
  return static_cast<int>(rng.between(kMinShots, kMaxShots));
}

CurriculumRecord make_curriculum_record(const std::vector<const Sample*>& demos, const Sample& predicted,
                                        SelectionStrategy strategy) {
  CurriculumRecord r;
  for (const Sample* s : demos) r.demonstration_ids.push_back(s->id);
  r.predicted_id = predicted.id;
  r.k = static_cast<int>(demos.size());
  r.strategy = strategy;
  r.prompt_text = encode_prompt(make_prompt(demos, predicted));
  r.target_text = predicted.target;
  return r;
}

std::string curriculum_to_jsonl(const std::vector<CurriculumRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["demonstration_ids"] = r.demonstration_ids;
    j["predicted_id"] = r.predicted_id;
    j["k"] = r.k;
    j["strategy"] = strategy_name(r.strategy);
    j["prompt_text"] = r.prompt_text;
    j["target_text"] = r.target_text;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<CurriculumRecord> parse_curriculum(std::string_view text) {
  std::vector<CurriculumRecord> out;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    const std::size_t eol = text.find('\n', pos);
    const std::string_view line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    const std::size_t start = pos;
    pos = eol == std::string_view::npos ? text.size() : eol + 1;
    ++line_no;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    try {
      const auto j = nlohmann::json::parse(line);
      CurriculumRecord r;
      r.demonstration_ids = j.at("demonstration_ids").get<std::vector<std::int64_t>>();
      r.predicted_id = j.at("predicted_id").get<std::int64_t>();
      r.k = j.at("k").get<int>();
      const auto strategy = parse_strategy(j.at("strategy").get<std::string>());
      if (!strategy) throw ParseError(where + "unknown strategy", start);
      r.strategy = *strategy;
      r.prompt_text = j.at("prompt_text").get<std::string>();
      r.target_text = j.at("target_text").get<std::string>();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(where + e.what(), start);
    }
  }
  return out;
}

}  // namespace coat
