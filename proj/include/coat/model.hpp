#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "coat/prompts.hpp"

namespace coat {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
template <typename Scalar>
using ColVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using TokenId = std::int32_t;

struct ModelConfig {
  int n_layers = 2;
  int d_model = 64;
  int n_heads = 4;
  int d_ff = 256;
  int max_seq_len = 512;
  int vocab_size = 0;
  double dropout = 0.0;

  int head_dim() const noexcept { return d_model / n_heads; }
  /// Throws InvalidArgument on non-positive sizes, d_model % n_heads != 0 or dropout outside [0, 1).
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <typename Scalar>
struct LayerParameters {
  RowVector<Scalar> ln1_gain, ln1_bias;
  Matrix<Scalar> wq, wk, wv, wo;  // d_model x d_model
  RowVector<Scalar> ln2_gain, ln2_bias;
  Matrix<Scalar> w1;  // d_model x d_ff
  RowVector<Scalar> b1;
  Matrix<Scalar> w2;  // d_ff x d_model
  RowVector<Scalar> b2;
};

/// All trainable tensors of the decoder. Also used for gradients and for the
/// optimizer's moment accumulators, which share the parameter shapes.
template <typename Scalar>
struct Parameters {
  Matrix<Scalar> token_embedding;     // vocab x d_model
  Matrix<Scalar> position_embedding;  // max_seq_len x d_model
  std::vector<LayerParameters<Scalar>> layers;
  RowVector<Scalar> final_gain, final_bias;
  Matrix<Scalar> lm_head;  // d_model x vocab

  static Parameters zeros(const ModelConfig& cfg);

  /// Calls f(name, tensor) for every tensor in a fixed order.
  template <typename F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <typename F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

  std::size_t parameter_count() const;
  void set_zero();
  bool all_finite() const;

 private:
  template <typename Self, typename F>
  static void visit_impl(Self& self, F& f) {
    f(std::string("token_embedding"), self.token_embedding);
    f(std::string("position_embedding"), self.position_embedding);
    for (std::size_t l = 0; l < self.layers.size(); ++l) {
      auto& L = self.layers[l];
      const std::string p = "layers." + std::to_string(l) + ".";
      f(p + "ln1.gain", L.ln1_gain);
      f(p + "ln1.bias", L.ln1_bias);
      f(p + "attn.wq", L.wq);
      f(p + "attn.wk", L.wk);
      f(p + "attn.wv", L.wv);
      f(p + "attn.wo", L.wo);
      f(p + "ln2.gain", L.ln2_gain);
      f(p + "ln2.bias", L.ln2_bias);
      f(p + "ffn.w1", L.w1);
      f(p + "ffn.b1", L.b1);
      f(p + "ffn.w2", L.w2);
      f(p + "ffn.b2", L.b2);
    }
    f(std::string("final_norm.gain"), self.final_gain);
    f(std::string("final_norm.bias"), self.final_bias);
    f(std::string("lm_head"), self.lm_head);
  }
};

/// Decoder-only causal transformer: learned token and position embeddings,
/// pre-norm blocks (multi-head attention, GELU feed-forward), final norm and
/// an untied output projection.
template <typename Scalar>
struct TinyLM {
  ModelConfig config;
  Parameters<Scalar> params;

  /// Gaussian(0, 0.02) weights, unit norm gains, zero biases.
  static TinyLM init(const ModelConfig& cfg, std::uint64_t seed);

  template <typename Other>
  TinyLM<Other> cast() const;
};

/// Keys and values of already-processed positions, one pair per layer.
/// Keys are stored transposed (d_model x max_seq_len), values row-major
/// (max_seq_len x d_model); `length` positions are live.
template <typename Scalar>
struct KvCache {
  std::vector<Matrix<Scalar>> keys, values;
  std::size_t length = 0;

  explicit KvCache(const ModelConfig& cfg);
  void truncate(std::size_t n) noexcept { length = n < length ? n : length; }
};

/// Runs `ids` at positions [cache.length, cache.length + ids.size()) and
/// appends their keys/values to the cache. Returns next-token log
/// probabilities for the chunk-relative rows listed in `output_rows`.
///
/// Every row is computed with a fixed operation order that does not depend
/// on how the sequence is split into chunks or batched with other rows, so
/// a position's output is a pure function of the tokens up to it.
template <typename Scalar>
Matrix<Scalar> extend(const TinyLM<Scalar>& m, KvCache<Scalar>& cache, std::span<const TokenId> ids,
                      std::span<const std::size_t> output_rows);

/// One continuation of a cached prefix.
struct Continuation {
  std::span<const TokenId> ids;
  std::span<const std::size_t> output_rows;
};

/// Runs independent continuations of the cache's live prefix in one pass
/// without modifying the cache. Each result equals what extend() returns
/// for that continuation on its own, bit for bit.
template <typename Scalar>
std::vector<Matrix<Scalar>> extend_branches(const TinyLM<Scalar>& m, const KvCache<Scalar>& cache,
                                            std::span<const Continuation> branches);

/// Next-token distributions at every position (T x vocab). Throws
/// InvalidArgument when ids.size() exceeds max_seq_len.
template <typename Scalar>
Matrix<Scalar> forward(const TinyLM<Scalar>& m, std::span<const TokenId> ids);

/// Mean negative log-likelihood over positions t with mask[t] set, where the
/// label at t is ids[t + 1].
template <typename Scalar>
double nll_loss(const TinyLM<Scalar>& m, std::span<const TokenId> ids, std::span<const std::uint8_t> mask);

struct TrainingSequence {
  std::vector<TokenId> ids;
  std::vector<std::uint8_t> loss_mask;
};

TrainingSequence to_training_sequence(const TokenizedInstance& t);

/// Mean masked NLL over all masked positions of the batch and its gradient.
/// A non-null `dropout_seed` enables dropout with masks derived from it.
template <typename Scalar>
struct LossAndGradient {
  double loss = 0.0;
  std::size_t n_targets = 0;
  Parameters<Scalar> gradient;
};

template <typename Scalar>
LossAndGradient<Scalar> compute_gradients(const TinyLM<Scalar>& m, std::span<const TrainingSequence> batch,
                                          const std::uint64_t* dropout_seed = nullptr);

template <typename Scalar>
double batch_loss(const TinyLM<Scalar>& m, std::span<const TrainingSequence> batch);

/// Adaptive-moment optimizer state; moments share the parameter shapes.
template <typename Scalar>
struct OptimizerState {
  std::int64_t step = 0;
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double grad_clip = 0.0;  // global-norm clip, 0 disables
  Parameters<Scalar> first_moment;
  Parameters<Scalar> second_moment;

  static OptimizerState create(const ModelConfig& cfg, double learning_rate);
};

/// Applies one update from a precomputed gradient.
template <typename Scalar>
void adam_update(TinyLM<Scalar>& m, OptimizerState<Scalar>& opt, const Parameters<Scalar>& gradient);

/// Computes the batch gradient, checks the loss is finite (NonFiniteLoss
/// otherwise, parameters untouched) and applies one update. Returns the loss.
template <typename Scalar>
double backward_and_step(TinyLM<Scalar>& m, OptimizerState<Scalar>& opt, std::span<const TrainingSequence> batch,
                         const std::uint64_t* dropout_seed = nullptr);

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst_tensor;
  std::size_t worst_index = 0;
};

/// Central finite differences on `n_coordinates` randomly chosen parameters.
/// Relative error is |a - n| / max(|a|, |n|), or the absolute error when
/// that denominator is below 1e-6.
GradCheckResult grad_check(const TinyLM<double>& m, std::span<const TrainingSequence> batch, double epsilon,
                           std::size_t n_coordinates = 200, std::uint64_t seed = 0);

/// Greedy argmax decoding (lowest id wins ties) until <eos> or max_new
/// tokens. Returned ids exclude the <eos>.
template <typename Scalar>
std::vector<TokenId> greedy_decode(const TinyLM<Scalar>& m, std::span<const TokenId> prompt_ids, int max_new);

/// Lowest index of the maximum; NaN entries never win.
template <typename Derived>
Eigen::Index argmax_lowest(const Eigen::DenseBase<Derived>& row) {
  Eigen::Index best = 0;
  for (Eigen::Index j = 1; j < row.size(); ++j)
    if (row(j) > row(best)) best = j;
  return best;
}

/// FNV-1a over raw parameter bytes in visit order.
template <typename Scalar>
std::uint64_t parameter_checksum(const TinyLM<Scalar>& m);

}  // namespace coat
