#pragma once

#include <filesystem>
#include <string>

namespace sceneforge {

// Root holding prompts/ and schemas/. The SCENEFORGE_DATA_DIR environment
// variable overrides the location compiled into the library.
std::filesystem::path default_data_dir();

std::string library_version();

// Writes `contents` to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

std::string read_file(const std::filesystem::path& path);

}  // namespace sceneforge
