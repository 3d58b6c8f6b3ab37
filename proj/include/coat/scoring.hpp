#pragma once

#include <span>
#include <vector>

#include "coat/model.hpp"
#include "coat/prompts.hpp"

namespace coat {

/// Teacher-forced likelihood of a prompt's predicted target, including the
/// terminal <eos>.
struct LikelihoodScore {
  double value = 1.0;              // exp(log_value); may underflow to 0
  std::vector<double> per_token;   // one probability per target token, then <eos>
  double log_value = 0.0;          // sum of per-token log probabilities

  friend bool operator==(const LikelihoodScore&, const LikelihoodScore&) = default;
};

/// Strict ordering used by selection: log_value, which never underflows.
inline bool lower_likelihood(const LikelihoodScore& a, const LikelihoodScore& b) noexcept {
  return a.log_value < b.log_value;
}

/// Maps a prompt to the likelihood of its predicted target. Implementations
/// are pure with respect to their model snapshot.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual LikelihoodScore score(const PromptInstance& p) = 0;

  /// Element i is score(base with candidates[i] appended as its last
  /// demonstration). Errors are rethrown as InvalidArgument naming i.
  virtual std::vector<LikelihoodScore> score_appended(const PromptInstance& base,
                                                      std::span<const Demonstration> candidates);
};

/// Scores prompts against a model. Keys/values of the longest shared prefix of
/// whole prompt lines are reused between calls; every line is run as its own
/// chunk so the score does not depend on what was cached before.
/// score_appended runs all candidates as branches of one batched pass and
/// returns exactly the values score() would.
template <typename Scalar>
class ModelScorer final : public Scorer {
 public:
  ModelScorer(const TinyLM<Scalar>& model, const Vocabulary& vocab);
  LikelihoodScore score(const PromptInstance& p) override;
  std::vector<LikelihoodScore> score_appended(const PromptInstance& base,
                                              std::span<const Demonstration> candidates) override;

 private:
  void hold(const std::vector<std::vector<TokenId>>& lines, std::size_t n);

  const TinyLM<Scalar>* model_;
  const Vocabulary* vocab_;
  KvCache<Scalar> cache_;
  std::vector<std::vector<TokenId>> lines_;  // chunks currently held in cache_
  std::vector<std::size_t> ends_;            // cache length after each chunk
};

/// Throws InvalidArgument when the prompt plus target exceeds max_seq_len or
/// the target is empty.
template <typename Scalar>
LikelihoodScore target_likelihood(const TinyLM<Scalar>& m, const Vocabulary& v, const PromptInstance& p);

/// Scores each candidate in order. An element's error is rethrown as
/// InvalidArgument naming its index.
std::vector<LikelihoodScore> batch_scores(Scorer& scorer, const std::vector<PromptInstance>& candidates);

template <typename Scalar>
std::vector<LikelihoodScore> batch_scores(const TinyLM<Scalar>& m, const Vocabulary& v,
                                          const std::vector<PromptInstance>& candidates);

}  // namespace coat
