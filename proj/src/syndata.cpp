#include "coat/syndata.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

#include <nlohmann/json.hpp>

#include "coat/errors.hpp"
#include "coat/io.hpp"
#include "coat/rng.hpp"

namespace coat {

namespace {

constexpr std::array<std::string_view, 8> kPrimitiveNames = {
    "select", "filter", "group", "project", "count", "compare", "max", "min"};

// Intermediate value of a chain fold. Only the members matching `kind` are live.
struct Value {
  ValueKind kind = ValueKind::Rows;
  Table rows;
  std::vector<int> keys;  // Groups: distinct values ascending; Values: projected numbers
  int number = 0;
  std::string name;
  bool flag = false;
  bool undefined = false;  // max/min of nothing, compare of fewer than two entries
};

[[noreturn]] void inapplicable(Primitive p, ValueKind k) {
  throw ChainExecutionError(std::string(primitive_name(p)) + " is not defined on " +
                            std::string(value_kind_name(k)));
}

Value apply(const ChainStep& step, Value in) {
  const Primitive p = step.primitive;
  const auto next = apply_kind(p, in.kind);
  if (!next) inapplicable(p, in.kind);

  Value out;
  out.kind = *next;
  if (in.undefined) {
    out.undefined = true;
    return out;
  }
  switch (p) {
    case Primitive::Select:
      out.rows = std::move(in.rows);
      break;
    case Primitive::Filter:
      for (auto& e : in.rows)
        if (e.value > step.threshold) out.rows.push_back(std::move(e));
      break;
    case Primitive::Group: {
      for (const auto& e : in.rows) out.keys.push_back(e.value);
      std::sort(out.keys.begin(), out.keys.end());
      out.keys.erase(std::unique(out.keys.begin(), out.keys.end()), out.keys.end());
      break;
    }
    case Primitive::Project:
      if (in.kind == ValueKind::Rows) {
        for (const auto& e : in.rows) out.keys.push_back(e.value);
      } else {
        out.keys = std::move(in.keys);
      }
      break;
    case Primitive::Count:
      out.number = static_cast<int>(in.kind == ValueKind::Rows ? in.rows.size() : in.keys.size());
      break;
    case Primitive::Compare: {
      // first entry strictly greater than the last; undefined below two entries
      const std::size_t n = in.kind == ValueKind::Rows ? in.rows.size() : in.keys.size();
      if (n < 2) {
        out.undefined = true;
        break;
      }
      out.flag = in.kind == ValueKind::Rows ? in.rows.front().value > in.rows.back().value
                                            : in.keys.front() > in.keys.back();
      break;
    }
    case Primitive::Max:
    case Primitive::Min: {
      const bool is_max = p == Primitive::Max;
      if (in.kind == ValueKind::Rows) {
        if (in.rows.empty()) {
          out.undefined = true;
          break;
        }
        // first row wins ties
        auto best = in.rows.begin();
        for (auto it = in.rows.begin(); it != in.rows.end(); ++it)
          if (is_max ? it->value > best->value : it->value < best->value) best = it;
        out.name = best->name;
      } else {
        if (in.keys.empty()) {
          out.undefined = true;
          break;
        }
        out.number = is_max ? *std::max_element(in.keys.begin(), in.keys.end())
                            : *std::min_element(in.keys.begin(), in.keys.end());
      }
      break;
    }
  }
  return out;
}

std::string render(const Value& v) {
  if (v.undefined) return {};
  switch (v.kind) {
    case ValueKind::Rows: {
      std::vector<std::string> names;
      for (const auto& e : v.rows) names.push_back(e.name);
      return join(names, " ");
    }
    case ValueKind::Groups:
    case ValueKind::Values: {
      std::vector<std::string> parts;
      for (int k : v.keys) parts.push_back(std::to_string(k));
      return join(parts, " ");
    }
    case ValueKind::Number:
      return std::to_string(v.number);
    case ValueKind::Name:
      return v.name;
    case ValueKind::Bool:
      return v.flag ? "yes" : "no";
  }
  return {};
}

bool is_table_pair(std::string_view tok) noexcept {
  return tok.size() >= 4 && tok.back() == ';' && tok.find('=') != std::string_view::npos;
}

// Natural-proxy phrasing: "Who is the largest of the above-4 of the table?"
std::string natural_question(const ConceptChain& chain, ValueKind kind) {
  std::string_view wh = "What";
  switch (kind) {
    case ValueKind::Name: wh = "Who"; break;
    case ValueKind::Rows: wh = "Which"; break;
    case ValueKind::Number: wh = "How"; break;
    case ValueKind::Bool: wh = "Is"; break;
    case ValueKind::Groups:
    case ValueKind::Values: wh = "What"; break;
  }
  std::vector<std::string> phrases;
  for (auto it = chain.steps().rbegin(); it != chain.steps().rend(); ++it) {
    switch (it->primitive) {
      case Primitive::Select: phrases.emplace_back("selection"); break;
      case Primitive::Filter: phrases.push_back("above-" + std::to_string(it->threshold)); break;
      case Primitive::Group: phrases.emplace_back("groups"); break;
      case Primitive::Project: phrases.emplace_back("values"); break;
      case Primitive::Count: phrases.emplace_back("count"); break;
      case Primitive::Compare: phrases.emplace_back("first-over-last"); break;
      case Primitive::Max: phrases.emplace_back("largest"); break;
      case Primitive::Min: phrases.emplace_back("smallest"); break;
    }
  }
  return std::string(wh) + " is the " + join(phrases, " of the ") + " of the table?";
}

Sample sample_from_chain(const ConceptChain& chain, std::uint64_t seed, const GeneratorConfig& cfg) {
  const auto kind = output_kind(chain);
  if (!kind) execute_chain(chain, Table{{"a", 0}});  // throws with the offending step

  Rng rng(seed);
  std::vector<char> names(cfg.entity_names.begin(), cfg.entity_names.end());
  for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
    const auto n_rows = static_cast<std::size_t>(rng.between(cfg.min_rows, cfg.max_rows));
    rng.partial_shuffle(names, n_rows);
    Table table;
    for (std::size_t r = 0; r < n_rows; ++r)
      table.push_back({std::string(1, names[r]), static_cast<int>(rng.between(0, cfg.max_value))});
    std::string answer = execute_chain(chain, table);
    if (answer.empty()) continue;

    Sample s;
    s.target = std::move(answer);
    if (cfg.style == QuestionStyle::Latent) {
      s.input = render_table(table) + " " + std::string(kLatentQuestion);
      s.concept_id = chain.id();
    } else {
      const std::string q = natural_question(chain, *kind);
      s.input = render_table(table) + " " + q;
      s.concept_id = extract_wh_concept(q);
    }
    return s;
  }
  throw GenerationFailure("no non-empty answer for chain " + chain.id() + " after " +
                          std::to_string(cfg.max_retries) + " attempts");
}

// Draws `n` distinct executable chains for a dataset.
std::vector<ConceptChain> draw_concepts(int n, std::uint64_t seed, const GeneratorConfig& cfg) {
  std::vector<ConceptChain> chains;
  std::set<std::string> seen;
  constexpr std::uint64_t kMaxAttempts = 1'000'000;
  for (std::uint64_t attempt = 0; static_cast<int>(chains.size()) < n; ++attempt) {
    if (attempt == kMaxAttempts)
      throw GenerationFailure("could only find " + std::to_string(chains.size()) + " of " +
                              std::to_string(n) + " executable concepts");
    ConceptChain chain = gen_concept_chain(derive_seed(seed, "concept", attempt), cfg.max_depth, cfg);
    if (seen.contains(chain.id()) || !output_kind(chain)) continue;
    try {
      (void)sample_from_chain(chain, derive_seed(seed, "probe", attempt), cfg);
    } catch (const GenerationFailure&) {
      continue;
    }
    seen.insert(chain.id());
    chains.push_back(std::move(chain));
  }
  return chains;
}

// Draws one sample per slot, round-robin over `chains`, re-drawing a slot
// whose input text already occurs so that inputs are unique in the dataset.
Dataset fill_dataset(const std::vector<ConceptChain>& chains, int n_samples, std::uint64_t seed, std::string_view tag,
                     const GeneratorConfig& cfg) {
  Dataset d;
  d.samples.reserve(static_cast<std::size_t>(n_samples));
  std::set<std::string> inputs;
  for (int i = 0; i < n_samples; ++i) {
    const ConceptChain& chain = chains[static_cast<std::size_t>(i) % chains.size()];
    const std::uint64_t slot_seed = derive_seed(seed, tag, static_cast<std::uint64_t>(i));
    for (int retry = 0;; ++retry) {
      if (retry == cfg.max_retries)
        throw GenerationFailure("no unused input for chain " + chain.id() + " after " +
                                std::to_string(cfg.max_retries) + " attempts");
      Sample s = sample_from_chain(chain, retry == 0 ? slot_seed : derive_seed(slot_seed, "retry", retry), cfg);
      if (!inputs.insert(s.input).second) continue;
      s.id = i;
      d.samples.push_back(std::move(s));
      break;
    }
  }
  return d;
}

}  // namespace

std::string_view primitive_name(Primitive p) noexcept { return kPrimitiveNames[static_cast<std::size_t>(p)]; }

std::optional<Primitive> parse_primitive(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kPrimitiveNames.size(); ++i)
    if (kPrimitiveNames[i] == name) return kPrimitives[i];
  return std::nullopt;
}

std::string ChainStep::name() const {
  if (primitive == Primitive::Filter) return "filter(value>" + std::to_string(threshold) + ")";
  return std::string(primitive_name(primitive));
}

ConceptChain::ConceptChain(std::vector<ChainStep> steps) : steps_(std::move(steps)) {
  if (steps_.empty() || steps_.size() > kMaxDepth)
    throw InvalidArgument("concept chain length must be in [1, 4], got " + std::to_string(steps_.size()));
  for (std::size_t i = 0; i < steps_.size(); ++i) {
    if (steps_[i].primitive != Primitive::Filter) steps_[i].threshold = 0;
    if (i) id_ += kArrow;
    id_ += steps_[i].name();
  }
}

ConceptChain ConceptChain::parse(std::string_view id) {
  std::vector<ChainStep> steps;
  std::size_t pos = 0;
  while (true) {
    const std::size_t end = id.find(kArrow, pos);
    const std::string_view tok = id.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    ChainStep step;
    if (auto p = parse_primitive(tok)) {
      step.primitive = *p;
      if (*p == Primitive::Filter) throw ParseError("filter step needs a threshold: " + std::string(id), pos);
    } else {
      constexpr std::string_view kFilterPrefix = "filter(value>";
      if (!tok.starts_with(kFilterPrefix) || !tok.ends_with(")"))
        throw ParseError("unknown primitive '" + std::string(tok) + "'", pos);
      const std::string_view num = tok.substr(kFilterPrefix.size(), tok.size() - kFilterPrefix.size() - 1);
      int value = 0;
      const auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), value);
      if (ec != std::errc{} || ptr != num.data() + num.size())
        throw ParseError("bad filter threshold '" + std::string(num) + "'", pos);
      step.primitive = Primitive::Filter;
      step.threshold = value;
    }
    steps.push_back(step);
    if (end == std::string_view::npos) break;
    pos = end + kArrow.size();
  }
  if (steps.size() > kMaxDepth) throw ParseError("concept chain longer than 4: " + std::string(id), 0);
  return ConceptChain(std::move(steps));
}

std::string_view value_kind_name(ValueKind k) noexcept {
  switch (k) {
    case ValueKind::Rows: return "rows";
    case ValueKind::Groups: return "groups";
    case ValueKind::Values: return "values";
    case ValueKind::Number: return "number";
    case ValueKind::Name: return "name";
    case ValueKind::Bool: return "bool";
  }
  return "?";
}

std::optional<ValueKind> apply_kind(Primitive p, ValueKind in) noexcept {
  using K = ValueKind;
  switch (p) {
    case Primitive::Select:
    case Primitive::Filter:
      if (in == K::Rows) return K::Rows;
      break;
    case Primitive::Group:
      if (in == K::Rows) return K::Groups;
      break;
    case Primitive::Project:
      if (in == K::Rows || in == K::Groups) return K::Values;
      break;
    case Primitive::Count:
      if (in == K::Rows || in == K::Groups || in == K::Values) return K::Number;
      break;
    case Primitive::Compare:
      if (in == K::Rows || in == K::Values) return K::Bool;
      break;
    case Primitive::Max:
    case Primitive::Min:
      if (in == K::Rows) return K::Name;
      if (in == K::Values || in == K::Groups) return K::Number;
      break;
  }
  return std::nullopt;
}

std::optional<ValueKind> output_kind(const ConceptChain& chain) noexcept {
  std::optional<ValueKind> k = ValueKind::Rows;
  for (const auto& step : chain.steps()) {
    k = apply_kind(step.primitive, *k);
    if (!k) return std::nullopt;
  }
  return k;
}

std::string execute_chain(const ConceptChain& chain, const Table& context) {
  if (context.empty()) throw InvalidArgument("execute_chain: empty context table");
  Value v;
  v.kind = ValueKind::Rows;
  v.rows = context;
  for (const auto& step : chain.steps()) v = apply(step, std::move(v));
  return render(v);
}

std::string render_table(const Table& table) {
  std::string out;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (i) out += ' ';
    out += table[i].name + "=" + std::to_string(table[i].value) + ";";
  }
  return out;
}

Table parse_context(std::string_view input) {
  Table table;
  for (const auto& tok : split_ws(input)) {
    if (!is_table_pair(tok)) break;
    const auto eq = tok.find('=');
    Entity e;
    e.name = tok.substr(0, eq);
    const std::string_view num(tok.data() + eq + 1, tok.size() - eq - 2);
    const auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), e.value);
    if (ec != std::errc{} || ptr != num.data() + num.size())
      throw ParseError("bad table entry '" + tok + "'", 0);
    table.push_back(std::move(e));
  }
  return table;
}

std::string question_portion(std::string_view input) {
  const auto toks = split_ws(input);
  std::size_t i = 0;
  while (i < toks.size() && is_table_pair(toks[i])) ++i;
  if (i == toks.size()) return normalize_ws(input);
  return join(std::vector<std::string>(toks.begin() + static_cast<std::ptrdiff_t>(i), toks.end()), " ");
}

std::string_view split_name(Split s) noexcept {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "?";
}

std::set<std::string> Dataset::concept_universe() const {
  std::set<std::string> out;
  for (const auto& s : samples) out.insert(s.concept_id);
  return out;
}

std::map<std::string, std::size_t> Dataset::concept_histogram() const {
  std::map<std::string, std::size_t> out;
  for (const auto& s : samples) ++out[s.concept_id];
  return out;
}

bool contains_reserved_marker(std::string_view text) noexcept {
  return text.find("Input:") != std::string_view::npos || text.find("Prediction:") != std::string_view::npos;
}

void Dataset::validate() const {
  std::set<std::int64_t> ids;
  for (const auto& s : samples) {
    if (!ids.insert(s.id).second) throw InvalidArgument("duplicate sample id " + std::to_string(s.id));
    if (s.input.empty() || s.target.empty())
      throw InvalidArgument("sample " + std::to_string(s.id) + " has an empty input or target");
    if (contains_reserved_marker(s.input) || contains_reserved_marker(s.target))
      throw InvalidArgument("sample " + std::to_string(s.id) + " contains a reserved prompt marker");
  }
}

void GeneratorConfig::validate() const {
  if (min_rows < 1 || max_rows < min_rows) throw InvalidArgument("row range must satisfy 1 <= min_rows <= max_rows");
  if (static_cast<std::size_t>(max_rows) > entity_names.size())
    throw InvalidArgument("max_rows exceeds the number of entity names");
  if (max_value < 1) throw InvalidArgument("max_value must be positive");
  if (max_depth < 1 || max_depth > static_cast<int>(ConceptChain::kMaxDepth))
    throw InvalidArgument("max_depth must be in [1, 4]");
  if (min_threshold > max_threshold) throw InvalidArgument("threshold range is empty");
  if (max_retries < 1) throw InvalidArgument("max_retries must be positive");
}

ConceptChain gen_concept_chain(std::uint64_t seed, int max_depth, const GeneratorConfig& cfg) {
  if (max_depth < 1 || max_depth > static_cast<int>(ConceptChain::kMaxDepth))
    throw InvalidArgument("max_depth must be in [1, 4], got " + std::to_string(max_depth));
  Rng rng(seed);
  const auto length = static_cast<std::size_t>(rng.between(1, max_depth));
  std::vector<ChainStep> steps;
  for (std::size_t i = 0; i < length; ++i) {
    ChainStep step{kPrimitives[rng.below(kPrimitives.size())], 0};
    if (step.primitive == Primitive::Filter)
      step.threshold = static_cast<int>(rng.between(cfg.min_threshold, cfg.max_threshold));
    steps.push_back(step);
  }
  return ConceptChain(std::move(steps));
}

Sample gen_sample(const ConceptChain& chain, std::uint64_t seed, const GeneratorConfig& cfg) {
  cfg.validate();
  return sample_from_chain(chain, seed, cfg);
}

Dataset gen_dataset(int n_samples, int n_concepts, std::uint64_t seed, const GeneratorConfig& cfg) {
  if (n_concepts < 2) throw InvalidArgument("gen_dataset: n_concepts must be >= 2");
  if (n_samples < 2 * n_concepts) throw InvalidArgument("gen_dataset: n_samples must be >= 2 * n_concepts");
  cfg.validate();
  return fill_dataset(draw_concepts(n_concepts, seed, cfg), n_samples, seed, "sample", cfg);
}

Dataset gen_natural_dataset(int n_samples, int n_chains, std::uint64_t seed, GeneratorConfig cfg) {
  if (n_chains < 1) throw InvalidArgument("gen_natural_dataset: n_chains must be >= 1");
  if (n_samples < 2 * n_chains) throw InvalidArgument("gen_natural_dataset: n_samples must be >= 2 * n_chains");
  cfg.style = QuestionStyle::Natural;
  cfg.validate();
  return fill_dataset(draw_concepts(n_chains, derive_seed(seed, "natural"), cfg), n_samples, seed, "natural-sample",
                      cfg);
}

std::pair<Dataset, Dataset> split_unseen_concepts(const Dataset& d, double held_out_fraction, std::uint64_t seed) {
  if (!(held_out_fraction > 0.0 && held_out_fraction < 1.0))
    throw InvalidArgument("held_out_fraction must lie in (0, 1)");
  const auto hist = d.concept_histogram();
  if (hist.size() < 2) throw InvalidArgument("split_unseen_concepts needs at least two concepts");
  const auto n_test = static_cast<std::size_t>(std::llround(held_out_fraction * static_cast<double>(hist.size())));
  if (n_test == 0 || n_test >= hist.size())
    throw InvalidArgument("held_out_fraction " + std::to_string(held_out_fraction) + " leaves one side empty for " +
                          std::to_string(hist.size()) + " concepts");

  // test concepts need a demonstration besides the predicted sample
  std::vector<std::string> eligible;
  for (const auto& [c, n] : hist)
    if (n >= 2) eligible.push_back(c);
  if (eligible.size() < n_test) throw InvalidArgument("not enough concepts with >= 2 samples to hold out");
  Rng rng(seed);
  rng.partial_shuffle(eligible, n_test);
  const std::set<std::string> test_concepts(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(n_test));

  Dataset train, test;
  train.split = Split::Train;
  test.split = Split::Test;
  for (const auto& s : d.samples) (test_concepts.contains(s.concept_id) ? test : train).samples.push_back(s);
  return {std::move(train), std::move(test)};
}

std::pair<Dataset, Dataset> split_validation(const Dataset& d, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw InvalidArgument("validation fraction must lie in [0, 1)");
  std::map<std::string, std::vector<std::size_t>> by_concept;
  for (std::size_t i = 0; i < d.samples.size(); ++i) by_concept[d.samples[i].concept_id].push_back(i);

  std::vector<bool> held(d.samples.size(), false);
  std::uint64_t ordinal = 0;
  for (auto& [c, idx] : by_concept) {
    const auto n = idx.size();
    auto n_val = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
    n_val = std::min(n_val, n >= 2 ? n - 2 : 0);
    Rng rng(derive_seed(seed, "validation", ordinal++));
    rng.partial_shuffle(idx, n_val);
    for (std::size_t j = 0; j < n_val; ++j) held[idx[j]] = true;
  }
  Dataset train, valid;
  train.split = d.split;
  valid.split = Split::Validation;
  for (std::size_t i = 0; i < d.samples.size(); ++i) (held[i] ? valid : train).samples.push_back(d.samples[i]);
  return {std::move(train), std::move(valid)};
}

std::string extract_wh_concept(std::string_view question) {
  const auto toks = split_ws(question);
  if (toks.empty()) throw InvalidArgument("extract_wh_concept: empty question");
  std::string out;
  for (char c : toks.front()) {
    const auto u = static_cast<unsigned char>(c);
    if (std::ispunct(u)) continue;
    out += static_cast<char>(std::tolower(u));
  }
  if (out.empty()) throw InvalidArgument("extract_wh_concept: first token has no word characters");
  return out;
}

Dataset parse_jsonl(std::string_view text, const FieldMap& fields) {
  Dataset d;
  std::set<std::int64_t> ids;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t end = text.find('\n', pos);
    std::string_view line = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    pos = end == std::string_view::npos ? text.size() : end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const std::string where = "line " + std::to_string(line_no) + ": ";

    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(where + "invalid JSON (" + e.what() + ")", line_no);
    }
    if (!rec.is_object()) throw ParseError(where + "record is not a JSON object", line_no);
    auto get_string = [&](const std::string& key) -> std::string {
      const auto it = rec.find(key);
      if (it == rec.end()) throw ParseError(where + "missing key \"" + key + "\"", line_no);
      if (!it->is_string()) throw ParseError(where + "key \"" + key + "\" is not a string", line_no);
      return it->get<std::string>();
    };

    Sample s;
    s.input = get_string(fields.input);
    s.target = get_string(fields.target);
    if (const auto it = rec.find(fields.id); it != rec.end()) {
      if (!it->is_number_integer()) throw ParseError(where + "key \"" + fields.id + "\" is not an integer", line_no);
      s.id = it->get<std::int64_t>();
    } else {
      s.id = static_cast<std::int64_t>(d.samples.size());
    }
    if (rec.contains(fields.concept_key)) {
      s.concept_id = get_string(fields.concept_key);
    } else {
      try {
        s.concept_id = extract_wh_concept(question_portion(s.input));
      } catch (const InvalidArgument& e) {
        throw ParseError(where + e.what(), line_no);
      }
    }
    if (s.input.empty() || s.target.empty()) throw ParseError(where + "empty input or target", line_no);
    if (contains_reserved_marker(s.input) || contains_reserved_marker(s.target))
      throw ParseError(where + "text contains a reserved prompt marker", line_no);
    if (!ids.insert(s.id).second) throw ParseError(where + "duplicate id " + std::to_string(s.id), line_no);
    d.samples.push_back(std::move(s));
  }
  if (d.samples.empty()) throw InvalidArgument("JSONL input contains no records");
  return d;
}

Dataset ingest_jsonl(const std::filesystem::path& path, const FieldMap& fields) {
  return parse_jsonl(read_file(path), fields);
}

std::string to_jsonl(const Dataset& d) {
  std::string out;
  for (const auto& s : d.samples) {
    nlohmann::ordered_json rec;
    rec["id"] = s.id;
    rec["input"] = s.input;
    rec["target"] = s.target;
    rec["concept"] = s.concept_id;
    out += rec.dump();
    out += '\n';
  }
  return out;
}

void write_jsonl(const Dataset& d, const std::filesystem::path& path) { write_file(path, to_jsonl(d)); }

}  // namespace coat
