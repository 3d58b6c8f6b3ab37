#include <doctest.h>

#include <chrono>
#include <filesystem>

#include "coat/errors.hpp"
#include "coat/io.hpp"
#include "coat/prompts.hpp"
#include "coat/rng.hpp"
#include "golden_cases.hpp"

using namespace coat;
using namespace coat::testing;

namespace {

std::size_t occurrences(const std::string& text, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

std::string random_word(Rng& rng) {
  static const std::vector<std::string> words{"a", "b=3;", "What", "follows?", "7", "yes", "no", "x", "Who", "is", "\xc3\xa9"};
  return words[rng.below(words.size())];
}

std::string random_text(Rng& rng, int max_words) {
  std::string out;
  const auto n = rng.between(1, max_words);
  for (int i = 0; i < n; ++i) {
    if (i) out += rng.below(5) == 0 ? "  " : " ";
    out += random_word(rng);
  }
  return out;
}

PromptInstance random_prompt(Rng& rng) {
  PromptInstance p;
  const auto k = rng.between(0, 8);
  for (int i = 0; i < k; ++i) p.demonstrations.push_back({random_text(rng, 6), random_text(rng, 3)});
  p.predicted_input = random_text(rng, 6) + " #" + std::to_string(rng.below(1000));
  return p;
}

}  // namespace

TEST_CASE("encode_prompt matches the golden files byte for byte and decodes back") {
  const auto start = std::chrono::steady_clock::now();
  for (const auto& g : golden_cases()) {
    INFO(g.file);
    const std::string want = read_file(std::filesystem::path(COAT_GOLDEN_DIR) / g.file);
    CHECK(encode_prompt(g.p) == want);
    const auto back = decode_prompt(want);
    CHECK(back.demonstrations == g.p.demonstrations);
    CHECK(back.predicted_input == g.p.predicted_input);
  }
  CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(1));
}

TEST_CASE("encode_prompt worked examples") {
  CHECK(encode_prompt(prompt({}, "q")) == "Input: q");
  CHECK(encode_prompt(prompt({{"a", "1"}, {"b", "2"}}, "c")) == "Input: a Prediction: 1\nInput: b Prediction: 2\nInput: c");
}

TEST_CASE("encode/decode round-trip and marker counts on random prompts") {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const auto p = random_prompt(rng);
    const std::string text = encode_prompt(p);
    CHECK(occurrences(text, " Prediction: ") == p.k());
    CHECK(occurrences(text, "Input: ") == p.k() + 1);
    CHECK(text.back() != '\n');
    const auto back = decode_prompt(text);
    CHECK(back.demonstrations == p.demonstrations);
    CHECK(back.predicted_input == p.predicted_input);
    CHECK(back.predicted_target.empty());
  }
}

TEST_CASE("encode_prompt rejects invalid prompts") {
  CHECK_THROWS_AS(encode_prompt(prompt({{"Input: x", "1"}}, "c")), InvalidArgument);
  CHECK_THROWS_AS(encode_prompt(prompt({{"x", "Prediction: 1"}}, "c")), InvalidArgument);
  CHECK_THROWS_AS(encode_prompt(prompt({}, "has Input: inside")), InvalidArgument);
  CHECK_THROWS_AS(encode_prompt(prompt({{"a\nb", "1"}}, "c")), InvalidArgument);
  CHECK_THROWS_AS(encode_prompt(prompt({{"c", "1"}}, "c")), InvalidArgument);
  std::vector<Demonstration> nine(9, {"a", "1"});
  CHECK_THROWS_AS(encode_prompt(prompt(nine, "c")), InvalidArgument);
}

TEST_CASE("decode_prompt reports grammar violations with positions") {
  CHECK(decode_prompt("Input: q").k() == 0);
  CHECK(decode_prompt("Input: q").predicted_input == "q");
  CHECK_THROWS_AS(decode_prompt("Prediction: 1"), ParseError);
  try {
    decode_prompt("Input: a Prediction: 1\nOutput: b");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.position() == 23);
  }
  try {
    decode_prompt("Input: a 1\nInput: b");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.position() == 10);
  }
  CHECK_THROWS_AS(decode_prompt("Input: a Prediction: 1\nInput: b Prediction: 2"), ParseError);
  CHECK_THROWS_AS(decode_prompt(""), ParseError);
}

TEST_CASE("vocabulary construction and serialization") {
  Dataset d;
  d.samples = {{0, "a=1; b=2; What follows?", "b", "c1"}, {1, "c=3; What follows?", "3 c", "c2"}};
  const Vocabulary v = build_vocab(d);
  // a=1; b=2; What follows? b c=3; 3 c Input: Prediction:
  CHECK(v.size() == 10 + Vocabulary::kNumSpecials);
  CHECK(v.token(Vocabulary::kPad) == "<pad>");
  CHECK(v.token(Vocabulary::kEos) == "<eos>");
  CHECK(v.token(Vocabulary::kUnk) == "<unk>");
  for (std::int32_t i = 0; i < static_cast<std::int32_t>(v.size()); ++i) CHECK(v.id(v.token(i)) == i);
  CHECK(v.id("never-seen") == Vocabulary::kUnk);
  CHECK(Vocabulary::deserialize(v.serialize()) == v);

  const auto path = std::filesystem::temp_directory_path() / "coat_prompts_vocab.txt";
  v.save(path);
  CHECK(Vocabulary::load(path) == v);
  std::filesystem::remove(path);

  CHECK_THROWS_AS(build_vocab(Dataset{}), InvalidArgument);
  CHECK_THROWS_AS(Vocabulary::deserialize("a\nb\n"), ParseError);
  CHECK_THROWS_AS(Vocabulary(std::vector<std::string>{"x", "x"}), InvalidArgument);
  CHECK_THROWS_AS(Vocabulary(std::vector<std::string>{"two words"}), InvalidArgument);
}

TEST_CASE("tokenization round-trips up to whitespace normalization") {
  Dataset d;
  d.samples = {{0, "a b=3; What follows? x Who is \xc3\xa9", "7 yes no", "c"}};
  const Vocabulary v = build_vocab(d);
  CHECK(tokenize(v, "").empty());
  CHECK(tokenize(v, "Input: a").size() == 2);
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const auto t = random_text(rng, 12);
    CHECK(detokenize(v, tokenize(v, "\t " + t + " \n")) == normalize_ws(t));
  }
  const auto p = prompt({{"a b=3;", "7"}, {"x", "yes no"}}, "Who is");
  CHECK(detokenize(v, tokenize(v, encode_prompt(p))) == normalize_ws(encode_prompt(p)));
}

TEST_CASE("training sequences mask exactly the target and end-of-sequence predictions") {
  Dataset d;
  d.samples = {{0, "a b", "c d", "k"}};
  const Vocabulary v = build_vocab(d);
  auto p = prompt({{"a", "c"}}, "b");
  p.predicted_target = "c d";
  const auto t = tokenize_for_training(v, p);
  // Input: a Prediction: c \n Input: b Prediction: c d <eos>
  const std::vector<std::string> want{"Input:", "a", "Prediction:", "c", "Input:", "b", "Prediction:", "c", "d", "<eos>"};
  REQUIRE(t.ids.size() == want.size());
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(v.token(t.ids[i]) == want[i]);
  CHECK(t.prompt_length == 7);
  const std::vector<std::uint8_t> mask{0, 0, 0, 0, 0, 0, 1, 1, 1, 0};
  CHECK(t.loss_mask == mask);
  CHECK(tokenize_for_generation(v, p) == std::vector<std::int32_t>(t.ids.begin(), t.ids.begin() + 7));

  p.predicted_target = "  ";
  CHECK_THROWS_AS(tokenize_for_training(v, p), InvalidArgument);
}
