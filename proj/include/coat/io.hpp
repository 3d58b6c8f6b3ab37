#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace coat {

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

/// Splits on ASCII whitespace, dropping empty pieces.
std::vector<std::string> split_ws(std::string_view text);

/// Collapses whitespace runs to single spaces and trims both ends.
std::string normalize_ws(std::string_view text);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace coat
