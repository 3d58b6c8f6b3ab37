#include "coat/scoring.hpp"

#include <cmath>

#include "coat/errors.hpp"
#include "coat/io.hpp"

namespace coat {

namespace {

std::vector<TokenId> demo_line(const Vocabulary& v, const Demonstration& d) {
  return tokenize(v, std::string(kInputMarker) + " " + d.input + " " + std::string(kPredictionMarker) + " " + d.target);
}

std::vector<std::vector<TokenId>> prompt_lines(const Vocabulary& v, const PromptInstance& p) {
  std::vector<std::vector<TokenId>> lines;
  lines.reserve(p.demonstrations.size() + 1);
  for (const auto& d : p.demonstrations) lines.push_back(demo_line(v, d));
  lines.push_back(tokenize(v, std::string(kInputMarker) + " " + p.predicted_input));
  return lines;
}

std::vector<TokenId> target_chunk(const Vocabulary& v, const PromptInstance& p) {
  std::vector<TokenId> chunk{v.id(kPredictionMarker)};
  for (auto id : tokenize(v, p.predicted_target)) chunk.push_back(id);
  return chunk;
}

void check_scorable(const ModelConfig& cfg, const std::vector<std::vector<TokenId>>& lines,
                    const std::vector<TokenId>& target) {
  if (target.size() < 2) throw InvalidArgument("predicted target is empty");
  std::size_t total = target.size();
  for (const auto& l : lines) total += l.size();
  if (total > static_cast<std::size_t>(cfg.max_seq_len))
    throw InvalidArgument("prompt plus target spans " + std::to_string(total) + " tokens, max_seq_len is " +
                          std::to_string(cfg.max_seq_len));
}

// `logp` row i is the distribution after chunk[i]; labels are chunk[i + 1], then <eos>.
template <typename Scalar>
LikelihoodScore collect(const Matrix<Scalar>& logp, const std::vector<TokenId>& chunk) {
  LikelihoodScore s;
  s.per_token.resize(chunk.size());
  s.log_value = 0.0;
  for (std::size_t i = 0; i < chunk.size(); ++i) {
    const TokenId label = i + 1 < chunk.size() ? chunk[i + 1] : Vocabulary::kEos;
    const auto lp = static_cast<double>(logp(static_cast<Eigen::Index>(i), label));
    s.per_token[i] = std::exp(lp);
    s.log_value += lp;
  }
  s.value = std::exp(s.log_value);
  return s;
}

std::vector<std::size_t> iota_rows(std::size_t from, std::size_t n) {
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = from + i;
  return rows;
}

// Runs the target chunk on top of `cache` and restores the cache length.
template <typename Scalar>
LikelihoodScore score_target(const TinyLM<Scalar>& m, KvCache<Scalar>& cache, const std::vector<TokenId>& chunk) {
  const std::size_t base = cache.length;
  const Matrix<Scalar> logp = extend(m, cache, chunk, iota_rows(0, chunk.size()));
  cache.truncate(base);
  return collect(logp, chunk);
}

}  // namespace

template <typename Scalar>
ModelScorer<Scalar>::ModelScorer(const TinyLM<Scalar>& model, const Vocabulary& vocab)
    : model_(&model), vocab_(&vocab), cache_(model.config) {}

template <typename Scalar>
LikelihoodScore ModelScorer<Scalar>::score(const PromptInstance& p) {
  p.validate();
  const auto lines = prompt_lines(*vocab_, p);
  const auto target = target_chunk(*vocab_, p);
  check_scorable(model_->config, lines, target);

  hold(lines, lines.size());
  return score_target(*model_, cache_, target);
}

// Leaves exactly lines[0, n) in the cache, reusing the shared prefix.
template <typename Scalar>
void ModelScorer<Scalar>::hold(const std::vector<std::vector<TokenId>>& lines, std::size_t n) {
  std::size_t shared = 0;
  while (shared < n && shared < lines_.size() && lines[shared] == lines_[shared]) ++shared;
  lines_.resize(shared);
  ends_.resize(shared);
  cache_.truncate(shared == 0 ? 0 : ends_.back());
  for (std::size_t i = shared; i < n; ++i) {
    extend(*model_, cache_, lines[i], {});
    lines_.push_back(lines[i]);
    ends_.push_back(cache_.length);
  }
}

template <typename Scalar>
std::vector<LikelihoodScore> ModelScorer<Scalar>::score_appended(const PromptInstance& base,
                                                                 std::span<const Demonstration> candidates) {
  const auto lines = prompt_lines(*vocab_, base);
  const std::size_t n_demos = base.demonstrations.size();
  const auto target = target_chunk(*vocab_, base);

  std::vector<std::vector<TokenId>> ids(candidates.size());
  std::vector<std::vector<std::size_t>> rows(candidates.size());
  PromptInstance probe = base;
  probe.demonstrations.emplace_back();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    try {
      probe.demonstrations.back() = candidates[i];
      probe.validate();
      const auto cand = demo_line(*vocab_, candidates[i]);
      std::vector<std::vector<TokenId>> all(lines.begin(), lines.begin() + static_cast<std::ptrdiff_t>(n_demos));
      all.push_back(cand);
      all.push_back(lines.back());
      check_scorable(model_->config, all, target);
      ids[i] = cand;
      ids[i].insert(ids[i].end(), lines.back().begin(), lines.back().end());
      const std::size_t target_at = ids[i].size();
      ids[i].insert(ids[i].end(), target.begin(), target.end());
      rows[i] = iota_rows(target_at, target.size());
    } catch (const std::exception& e) {
      throw InvalidArgument("candidate " + std::to_string(i) + ": " + e.what());
    }
  }
  hold(lines, n_demos);
  std::vector<Continuation> branches;
  for (std::size_t i = 0; i < candidates.size(); ++i) branches.push_back({ids[i], rows[i]});
  const auto logp = extend_branches(*model_, cache_, branches);
  std::vector<LikelihoodScore> out;
  out.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) out.push_back(collect(logp[i], target));
  return out;
}

template <typename Scalar>
LikelihoodScore target_likelihood(const TinyLM<Scalar>& m, const Vocabulary& v, const PromptInstance& p) {
  p.validate();
  const auto lines = prompt_lines(v, p);
  const auto target = target_chunk(v, p);
  check_scorable(m.config, lines, target);
  KvCache<Scalar> cache(m.config);
  for (const auto& line : lines) extend(m, cache, line, {});
  return score_target(m, cache, target);
}

std::vector<LikelihoodScore> Scorer::score_appended(const PromptInstance& base,
                                                    std::span<const Demonstration> candidates) {
  std::vector<LikelihoodScore> out;
  out.reserve(candidates.size());
  PromptInstance p = base;
  p.demonstrations.emplace_back();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    p.demonstrations.back() = candidates[i];
    try {
      out.push_back(score(p));
    } catch (const std::exception& e) {
      throw InvalidArgument("candidate " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

std::vector<LikelihoodScore> batch_scores(Scorer& scorer, const std::vector<PromptInstance>& candidates) {
  std::vector<LikelihoodScore> out;
  out.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    try {
      out.push_back(scorer.score(candidates[i]));
    } catch (const std::exception& e) {
      throw InvalidArgument("candidate " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

template <typename Scalar>
std::vector<LikelihoodScore> batch_scores(const TinyLM<Scalar>& m, const Vocabulary& v,
                                          const std::vector<PromptInstance>& candidates) {
  ModelScorer<Scalar> scorer(m, v);
  return batch_scores(scorer, candidates);
}

template class ModelScorer<float>;
template class ModelScorer<double>;
template LikelihoodScore target_likelihood(const TinyLM<float>&, const Vocabulary&, const PromptInstance&);
template LikelihoodScore target_likelihood(const TinyLM<double>&, const Vocabulary&, const PromptInstance&);
template std::vector<LikelihoodScore> batch_scores(const TinyLM<float>&, const Vocabulary&,
                                                   const std::vector<PromptInstance>&);
template std::vector<LikelihoodScore> batch_scores(const TinyLM<double>&, const Vocabulary&,
                                                   const std::vector<PromptInstance>&);

}  // namespace coat
