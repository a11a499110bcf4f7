#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "restorekit/image.hpp"

namespace restorekit {

std::string read_file(const std::filesystem::path& path);

/// Write to a sibling temporary file, then rename over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

/// Encode as 8-bit RGB PNG. Values are clamped to [0,1] and rounded.
std::string encode_png(const Image& img);
Image decode_png(std::string_view bytes);

void write_png(const std::filesystem::path& path, const Image& img);
Image read_png(const std::filesystem::path& path);

}  // namespace restorekit
