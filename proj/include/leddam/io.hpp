#pragma once

#include <string>
#include <string_view>

namespace leddam::io {

/// Writes to a sibling temp file and renames it over `path`, so readers never
/// observe a partially written file. Parent directories are created.
void write_file_atomic(const std::string& path, std::string_view content);

/// Throws ParseError("missing_file") when the file cannot be opened.
std::string read_file(const std::string& path);

/// Shortest round-trippable decimal form of a double.
std::string format_double(double v);

} // namespace leddam::io
