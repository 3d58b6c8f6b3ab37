#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "coat/prompts.hpp"
#include "coat/scoring.hpp"
#include "coat/syndata.hpp"

namespace coat {

/// Sample ids grouped by concept. Holds a reference to the indexed dataset,
/// which must outlive the index.
class ConceptIndex {
 public:
  /// Throws InvalidArgument on an empty dataset or duplicate ids.
  explicit ConceptIndex(const Dataset& d);

  const Dataset& dataset() const noexcept { return *dataset_; }
  /// Ascending ids; empty for an unknown concept.
  const std::vector<std::int64_t>& lookup(std::string_view concept_id) const;
  const Sample& sample(std::int64_t id) const;
  const std::map<std::string, std::vector<std::int64_t>, std::less<>>& groups() const noexcept { return groups_; }

 private:
  const Dataset* dataset_;
  std::map<std::string, std::vector<std::int64_t>, std::less<>> groups_;
  std::unordered_map<std::int64_t, std::size_t> position_;
};

ConceptIndex build_index(const Dataset& d);

inline constexpr std::size_t kDefaultPoolSize = 20;
inline constexpr int kMinShots = 2;
inline constexpr int kMaxShots = 8;

/// Informative candidates for one predicted sample (all share its concept).
struct CandidatePool {
  const Sample* predicted = nullptr;
  std::vector<const Sample*> candidates;
  std::string concept_id;
};

enum class SelectionStrategy : std::uint8_t { Coat, InfoOnly, RandomUniform };

std::string_view strategy_name(SelectionStrategy s) noexcept;  // "coat", "info_only", "random_uniform"
std::optional<SelectionStrategy> parse_strategy(std::string_view name) noexcept;
inline constexpr SelectionStrategy kAllStrategies[] = {SelectionStrategy::Coat, SelectionStrategy::InfoOnly,
                                                       SelectionStrategy::RandomUniform};

/// Uniform draw of min(pool_size, available) same-concept samples. The
/// predicted sample and samples with the same input text are never eligible.
/// Throws NoDemonstrations when nothing is eligible.
CandidatePool informative_pool(const ConceptIndex& idx, const Sample& predicted, std::size_t pool_size,
                               std::uint64_t seed);

/// Scores seen during one greedy step, in candidate order.
struct SelectionStep {
  std::vector<std::int64_t> candidate_ids;
  std::vector<double> log_values;
  std::int64_t chosen = -1;
};

/// Greedy non-trivial selection: each step appends the remaining candidate
/// whose prompt (selected demonstrations, then the candidate, then the
/// predicted input) gives the lowest target likelihood; ties go to the lowest
/// sample id. Runs min(k, |pool|) steps. Throws NoDemonstrations on an empty
/// pool and InvalidArgument when k < 1.
std::vector<const Sample*> select_nontrivial(const CandidatePool& pool, Scorer& scorer, int k,
                                             std::vector<SelectionStep>* trace = nullptr);

/// Uniform subset of min(k, |pool|) candidates in random order.
std::vector<const Sample*> select_info_only(const CandidatePool& pool, int k, std::uint64_t seed);

/// k distinct samples drawn uniformly from the whole dataset, excluding the
/// predicted sample (and any sample repeating its input text). Throws
/// InvalidArgument when fewer than k are eligible.
std::vector<const Sample*> select_random(const Dataset& d, const Sample& predicted, int k, std::uint64_t seed);

/// Uniform integer in [2, 8].
int draw_k(std::uint64_t seed);

/// One exported training prompt.
struct CurriculumRecord {
  std::vector<std::int64_t> demonstration_ids;
  std::int64_t predicted_id = 0;
  int k = 0;
  SelectionStrategy strategy = SelectionStrategy::Coat;
  std::string prompt_text;
  std::string target_text;

  friend bool operator==(const CurriculumRecord&, const CurriculumRecord&) = default;
};

CurriculumRecord make_curriculum_record(const std::vector<const Sample*>& demos, const Sample& predicted,
                                        SelectionStrategy strategy);
std::string curriculum_to_jsonl(const std::vector<CurriculumRecord>& records);
/// Throws ParseError("line N: ...") on malformed records.
std::vector<CurriculumRecord> parse_curriculum(std::string_view text);

}  // namespace coat
