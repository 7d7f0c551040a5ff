#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace maskpipe {

std::string read_text_file(const std::filesystem::path& path);

// Writes to a sibling temporary file and renames it over `path`, creating
// parent directories as needed.
void write_file_atomic(const std::filesystem::path& path,
                       std::string_view content);

}  // namespace maskpipe
