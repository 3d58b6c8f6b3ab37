#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace coat {

// ---------------------------------------------------------------------------
// Reasoning primitives and concept chains
// ---------------------------------------------------------------------------

enum class Primitive : std::uint8_t { Select, Filter, Group, Project, Count, Compare, Max, Min };

inline constexpr std::array<Primitive, 8> kPrimitives = {
    Primitive::Select, Primitive::Filter,  Primitive::Group, Primitive::Project,
    Primitive::Count,  Primitive::Compare, Primitive::Max,   Primitive::Min};

std::string_view primitive_name(Primitive p) noexcept;
std::optional<Primitive> parse_primitive(std::string_view name) noexcept;

/// One step of a chain. `threshold` is only meaningful for Filter, which keeps
/// rows whose value is strictly greater than it.
struct ChainStep {
  Primitive primitive = Primitive::Select;
  int threshold = 0;

  std::string name() const;
  friend bool operator==(const ChainStep&, const ChainStep&) = default;
};

/// An ordered sequence of 1..4 primitives. The id joins step names with "→"
/// and is the concept identifier of every sample generated from the chain.
class ConceptChain {
 public:
  static constexpr std::size_t kMaxDepth = 4;
  static constexpr std::string_view kArrow = "\xE2\x86\x92";  // U+2192

  explicit ConceptChain(std::vector<ChainStep> steps);

  /// Inverse of id(); throws ParseError on malformed ids.
  static ConceptChain parse(std::string_view id);

  const std::vector<ChainStep>& steps() const noexcept { return steps_; }
  const std::string& id() const noexcept { return id_; }
  std::size_t size() const noexcept { return steps_.size(); }

  friend bool operator==(const ConceptChain& a, const ConceptChain& b) { return a.steps_ == b.steps_; }

 private:
  std::vector<ChainStep> steps_;
  std::string id_;
};

// ---------------------------------------------------------------------------
// Entity tables and chain execution
// ---------------------------------------------------------------------------

struct Entity {
  std::string name;
  int value = 0;
  friend bool operator==(const Entity&, const Entity&) = default;
};
using Table = std::vector<Entity>;

/// Intermediate value kinds produced while folding a chain over a table.
enum class ValueKind : std::uint8_t { Rows, Groups, Values, Number, Name, Bool };

std::string_view value_kind_name(ValueKind k) noexcept;

/// Result kind of applying `p` to a value of kind `in`, or nullopt when the
/// primitive is not defined on that kind.
std::optional<ValueKind> apply_kind(Primitive p, ValueKind in) noexcept;

/// Static type check of a whole chain starting from a table.
std::optional<ValueKind> output_kind(const ConceptChain& chain) noexcept;

/// Folds the chain left-to-right over the table and renders the final value.
/// Empty collections render as the empty string. Throws ChainExecutionError
/// when a primitive is inapplicable and InvalidArgument on an empty table.
std::string execute_chain(const ConceptChain& chain, const Table& context);

/// "a=2; b=7; c=5;": every pair is terminated by ';'.
std::string render_table(const Table& table);

/// Recovers the table from a sample input produced by render_table + question.
Table parse_context(std::string_view input);

/// The text following the table pairs; the whole input when there is no table.
std::string question_portion(std::string_view input);

// ---------------------------------------------------------------------------
// Samples and datasets
// ---------------------------------------------------------------------------

struct Sample {
  std::int64_t id = 0;
  std::string input;
  std::string target;
  std::string concept_id;
  friend bool operator==(const Sample&, const Sample&) = default;
};

enum class Split : std::uint8_t { Train, Validation, Test };
std::string_view split_name(Split s) noexcept;

struct Dataset {
  std::vector<Sample> samples;
  Split split = Split::Train;

  std::set<std::string> concept_universe() const;
  std::map<std::string, std::size_t> concept_histogram() const;
  bool empty() const noexcept { return samples.empty(); }
  std::size_t size() const noexcept { return samples.size(); }

  /// Throws InvalidArgument on duplicate ids, empty fields or reserved markers.
  void validate() const;
};

/// Reserved prompt markers must never appear inside sample text.
bool contains_reserved_marker(std::string_view text) noexcept;

enum class QuestionStyle : std::uint8_t {
  Latent,   // fixed question, the concept is only visible through demonstrations
  Natural,  // the question describes the chain and opens with a wh-word
};

struct GeneratorConfig {
  int min_rows = 3;
  int max_rows = 5;
  int max_value = 9;
  int max_depth = 4;
  int min_threshold = 2;
  int max_threshold = 7;
  int max_retries = 64;
  std::string entity_names = "abcdefgh";
  QuestionStyle style = QuestionStyle::Latent;

  /// Throws InvalidArgument when the ranges are inconsistent.
  void validate() const;
};

inline constexpr std::string_view kLatentQuestion = "What follows?";

/// Chain of length uniform in [1, max_depth] with uniformly drawn primitives.
ConceptChain gen_concept_chain(std::uint64_t seed, int max_depth, const GeneratorConfig& cfg = {});

/// Draws a table, renders it with a question and executes the chain for the
/// answer. Retries on empty answers; throws GenerationFailure when the retry
/// budget is exhausted. The returned sample has id 0.
Sample gen_sample(const ConceptChain& chain, std::uint64_t seed, const GeneratorConfig& cfg = {});

/// `n_concepts` distinct executable chains, samples assigned round-robin so
/// every concept receives floor(n/c) or floor(n/c)+1 samples. Input texts are
/// unique within the dataset.
Dataset gen_dataset(int n_samples, int n_concepts, std::uint64_t seed, const GeneratorConfig& cfg = {});

/// Natural-proxy dataset: samples carry natural questions and their concept
/// is the question's initial word. `n_chains` chains drive the answers.
Dataset gen_natural_dataset(int n_samples, int n_chains, std::uint64_t seed,
                            GeneratorConfig cfg = {});

/// Concept-disjoint split: round(fraction * n_concepts) concepts go to test.
std::pair<Dataset, Dataset> split_unseen_concepts(const Dataset& d, double held_out_fraction,
                                                  std::uint64_t seed);

/// Held-in-concept split: per concept, floor(fraction * n) samples go to the
/// second dataset while at least two remain in the first.
std::pair<Dataset, Dataset> split_validation(const Dataset& d, double fraction, std::uint64_t seed);

/// First whitespace-delimited token, lower-cased, punctuation stripped.
std::string extract_wh_concept(std::string_view question);

struct FieldMap {
  std::string id = "id";
  std::string input = "input";
  std::string target = "target";
  std::string concept_key = "concept";
};

Dataset ingest_jsonl(const std::filesystem::path& path, const FieldMap& fields = {});
Dataset parse_jsonl(std::string_view text, const FieldMap& fields = {});
std::string to_jsonl(const Dataset& d);
void write_jsonl(const Dataset& d, const std::filesystem::path& path);

}  // namespace coat
