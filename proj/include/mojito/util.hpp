#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mojito {

// FNV-1a 64-bit, returned as 16 hex digits. Used for config hashes.
std::string fnv1a_hex(const std::string& text);

// Writes via a temporary file in the same directory, then renames.
void atomic_write_file(const std::string& path, const std::string& contents);

std::string read_file(const std::string& path);

std::string trim(const std::string& s);
std::vector<std::string> split_string(const std::string& s, char sep);

}  // namespace mojito
