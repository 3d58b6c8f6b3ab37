#include "coat/prompts.hpp"

#include <set>

#include "coat/errors.hpp"
#include "coat/io.hpp"

namespace coat {

namespace {

void check_field(std::string_view field, std::string_view what) {
  if (contains_reserved_marker(field))
    throw InvalidArgument(std::string(what) + " contains a reserved marker: \"" + std::string(field) + "\"");
  if (field.find('\n') != std::string_view::npos)
    throw InvalidArgument(std::string(what) + " contains a newline");
}

constexpr std::string_view kLinePrefix = "Input: ";
constexpr std::string_view kPredictionSep = " Prediction: ";

}  // namespace

void PromptInstance::validate() const {
  if (demonstrations.size() > kMaxDemonstrations)
    throw InvalidArgument("prompt has " + std::to_string(demonstrations.size()) + " demonstrations, at most 8 allowed");
  for (const auto& d : demonstrations) {
    check_field(d.input, "demonstration input");
    check_field(d.target, "demonstration target");
    if (d.input == predicted_input) throw InvalidArgument("predicted input appears among the demonstrations");
  }
  check_field(predicted_input, "predicted input");
  check_field(predicted_target, "predicted target");
}

PromptInstance make_prompt(const std::vector<const Sample*>& demonstrations, const Sample& predicted) {
  PromptInstance p;
  p.demonstrations.reserve(demonstrations.size());
  for (const Sample* s : demonstrations) p.demonstrations.push_back({s->input, s->target});
  p.predicted_input = predicted.input;
  p.predicted_target = predicted.target;
  return p;
}

std::string encode_prompt(const PromptInstance& p) {
  p.validate();
  std::string out;
  for (const auto& d : p.demonstrations) {
    out += kLinePrefix;
    out += d.input;
    out += kPredictionSep;
    out += d.target;
    out += '\n';
  }
  out += kLinePrefix;
  out += p.predicted_input;
  return out;
}

PromptInstance decode_prompt(std::string_view text) {
  PromptInstance p;
  std::size_t pos = 0;
  while (true) {
    const std::size_t eol = text.find('\n', pos);
    const std::string_view line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    if (!line.starts_with(kLinePrefix)) throw ParseError("expected \"Input: \" at offset " + std::to_string(pos), pos);
    const std::string_view body = line.substr(kLinePrefix.size());
    const std::size_t sep = body.find(kPredictionSep);

    if (eol == std::string_view::npos) {
      // final line: the predicted input, no prediction marker
      if (body.find(kPredictionMarker) != std::string_view::npos) {
        const std::size_t at = pos + kLinePrefix.size() + body.find(kPredictionMarker);
        throw ParseError("final line must not carry a prediction, offset " + std::to_string(at), at);
      }
      p.predicted_input = std::string(body);
      break;
    }
    if (sep == std::string_view::npos) {
      const std::size_t at = pos + line.size();
      throw ParseError("missing \" Prediction: \" on demonstration line ending at offset " + std::to_string(at), at);
    }
    p.demonstrations.push_back({std::string(body.substr(0, sep)), std::string(body.substr(sep + kPredictionSep.size()))});
    pos = eol + 1;
  }
  for (const auto& d : p.demonstrations) {
    if (contains_reserved_marker(d.input) || contains_reserved_marker(d.target))
      throw ParseError("reserved marker inside a demonstration field", 0);
  }
  if (p.demonstrations.size() > kMaxDemonstrations) throw ParseError("more than 8 demonstrations", 0);
  return p;
}

Vocabulary::Vocabulary() {
  add(std::string(kPadToken));
  add(std::string(kEosToken));
  add(std::string(kUnkToken));
}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) : Vocabulary() {
  for (const auto& t : tokens) {
    if (t.empty() || split_ws(t).size() != 1 || split_ws(t).front() != t)
      throw InvalidArgument("vocabulary token must be a single non-empty word: \"" + t + "\"");
    if (index_.contains(t)) throw InvalidArgument("duplicate vocabulary token \"" + t + "\"");
    add(t);
  }
}

void Vocabulary::add(std::string token) {
  index_.emplace(token, static_cast<std::int32_t>(tokens_.size()));
  tokens_.push_back(std::move(token));
}

std::int32_t Vocabulary::id(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw InvalidArgument("token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

bool Vocabulary::contains(std::string_view token) const { return index_.contains(std::string(token)); }

std::string Vocabulary::serialize() const {
  std::string out;
  for (const auto& t : tokens_) {
    out += t;
    out += '\n';
  }
  return out;
}

Vocabulary Vocabulary::deserialize(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t eol = text.find('\n', pos);
    lines.emplace_back(text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos));
    pos = eol == std::string_view::npos ? text.size() : eol + 1;
  }
  if (lines.size() < kNumSpecials || lines[0] != kPadToken || lines[1] != kEosToken || lines[2] != kUnkToken)
    throw ParseError("vocabulary must start with <pad>, <eos>, <unk>", 0);
  return Vocabulary(std::vector<std::string>(lines.begin() + kNumSpecials, lines.end()));
}

void Vocabulary::save(const std::filesystem::path& path) const { write_file(path, serialize()); }

Vocabulary Vocabulary::load(const std::filesystem::path& path) { return deserialize(read_file(path)); }

Vocabulary build_vocab(const std::vector<const Dataset*>& datasets) {
  std::set<std::string> tokens{std::string(kInputMarker), std::string(kPredictionMarker)};
  bool any = false;
  for (const Dataset* d : datasets) {
    for (const auto& s : d->samples) {
      any = true;
      for (auto& t : split_ws(s.input)) tokens.insert(std::move(t));
      for (auto& t : split_ws(s.target)) tokens.insert(std::move(t));
    }
  }
  if (!any) throw InvalidArgument("build_vocab: dataset is empty");
  for (std::string_view special : {Vocabulary::kPadToken, Vocabulary::kEosToken, Vocabulary::kUnkToken})
    tokens.erase(std::string(special));
  return Vocabulary(std::vector<std::string>(tokens.begin(), tokens.end()));
}

Vocabulary build_vocab(const Dataset& d) { return build_vocab(std::vector<const Dataset*>{&d}); }

std::vector<std::int32_t> tokenize(const Vocabulary& v, std::string_view text) {
  std::vector<std::int32_t> ids;
  for (const auto& t : split_ws(text)) ids.push_back(v.id(t));
  return ids;
}

std::string detokenize(const Vocabulary& v, const std::vector<std::int32_t>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += v.token(ids[i]);
  }
  return out;
}

std::vector<std::int32_t> tokenize_for_generation(const Vocabulary& v, const PromptInstance& p) {
  auto ids = tokenize(v, encode_prompt(p));
  ids.push_back(v.id(kPredictionMarker));
  return ids;
}

TokenizedInstance tokenize_for_training(const Vocabulary& v, const PromptInstance& p) {
  if (normalize_ws(p.predicted_target).empty()) throw InvalidArgument("predicted target is empty");
  TokenizedInstance out;
  out.ids = tokenize_for_generation(v, p);
  out.prompt_length = out.ids.size();
  for (auto id : tokenize(v, p.predicted_target)) out.ids.push_back(id);
  out.ids.push_back(Vocabulary::kEos);
  // position t predicts ids[t + 1]; targets start after the "Prediction:" marker
  out.loss_mask.assign(out.ids.size(), 0);
  for (std::size_t t = out.prompt_length - 1; t + 1 < out.ids.size(); ++t) out.loss_mask[t] = 1;
  return out;
}

}  // namespace coat
