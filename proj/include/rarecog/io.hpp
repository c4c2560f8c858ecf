#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace rarecog {

std::string read_text_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over `path`, so readers
/// never observe a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::span<const unsigned char> bytes,
                    std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(std::string_view text, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace rarecog
