#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace abrforge {

std::string read_file(const std::filesystem::path& path);

// Writes through a temporary sibling and renames, so readers never observe
// a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

// Appends one line (a newline is added) and flushes it to disk.
void append_line(const std::filesystem::path& path, std::string_view line);

}  // namespace abrforge
