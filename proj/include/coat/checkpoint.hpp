#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "coat/model.hpp"
#include "coat/prompts.hpp"

namespace coat {

/// Everything needed to resume or evaluate a run.
struct Checkpoint {
  TinyLM<float> model;
  OptimizerState<float> optimizer;
  Vocabulary vocab;
  std::int64_t step = 0;
};

/// Binary container: magic, format version, scalar width, model config,
/// vocabulary text, step, optimizer hyperparameters, then every named tensor
/// (parameters, first moments, second moments) with its shape and raw
/// little-endian floats. Round-trips bit-exactly.
std::string serialize_checkpoint(const Checkpoint& c);
/// Throws ParseError on a truncated or foreign file.
Checkpoint deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace coat
