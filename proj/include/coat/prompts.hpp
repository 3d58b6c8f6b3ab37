#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "coat/syndata.hpp"

namespace coat {

inline constexpr std::string_view kInputMarker = "Input:";
inline constexpr std::string_view kPredictionMarker = "Prediction:";
inline constexpr std::size_t kMaxDemonstrations = 8;

struct Demonstration {
  std::string input;
  std::string target;
  friend bool operator==(const Demonstration&, const Demonstration&) = default;
};

/// k demonstrations followed by the input to predict. `predicted_target` is
/// the generation label; it is not part of the encoded prompt text.
struct PromptInstance {
  std::vector<Demonstration> demonstrations;
  std::string predicted_input;
  std::string predicted_target;

  std::size_t k() const noexcept { return demonstrations.size(); }

  /// Throws InvalidArgument when k > 8, a field holds a reserved marker or a
  /// newline, or the predicted input repeats a demonstration input.
  void validate() const;
};

/// Builds a prompt from samples; the predicted sample supplies x_pred / y_pred.
PromptInstance make_prompt(const std::vector<const Sample*>& demonstrations, const Sample& predicted);

/// One "Input: x Prediction: y" line per demonstration (newline terminated),
/// then "Input: x_pred" with no trailing newline.
std::string encode_prompt(const PromptInstance& p);

/// Inverse of encode_prompt; predicted_target is left empty. Throws
/// ParseError carrying the byte offset of the first grammar violation.
PromptInstance decode_prompt(std::string_view text);

/// Word-level vocabulary. Ids 0, 1, 2 are the pad, end-of-sequence and
/// unknown specials; the remaining ids map one-to-one onto tokens.
class Vocabulary {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kEos = 1;
  static constexpr std::int32_t kUnk = 2;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kEosToken = "<eos>";
  static constexpr std::string_view kUnkToken = "<unk>";
  static constexpr std::size_t kNumSpecials = 3;

  Vocabulary();
  explicit Vocabulary(const std::vector<std::string>& tokens);  // non-special tokens, in id order

  std::int32_t id(std::string_view token) const;  // kUnk when absent
  const std::string& token(std::int32_t id) const;
  bool contains(std::string_view token) const;
  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  /// One token per line, line number = id, specials first.
  std::string serialize() const;
  static Vocabulary deserialize(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  void add(std::string token);
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;
};

/// Covers every token of every prompt that can be encoded over the datasets:
/// both markers plus all tokens of inputs and targets. Tokens are sorted.
Vocabulary build_vocab(const Dataset& d);
Vocabulary build_vocab(const std::vector<const Dataset*>& datasets);

std::vector<std::int32_t> tokenize(const Vocabulary& v, std::string_view text);
std::string detokenize(const Vocabulary& v, const std::vector<std::int32_t>& ids);

/// Token ids of encode_prompt(p) + " Prediction: " + target + <eos>. The loss
/// mask is set at each position whose next token belongs to the target or is
/// the terminal <eos>.
struct TokenizedInstance {
  std::vector<std::int32_t> ids;
  std::vector<std::uint8_t> loss_mask;
  std::size_t prompt_length = 0;  // tokens before the target (includes "Prediction:")
};

TokenizedInstance tokenize_for_training(const Vocabulary& v, const PromptInstance& p);

/// Tokens of the prompt followed by the "Prediction:" marker, ready for decoding.
std::vector<std::int32_t> tokenize_for_generation(const Vocabulary& v, const PromptInstance& p);

}  // namespace coat
