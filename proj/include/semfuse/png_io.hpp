#pragma once

#include "semfuse/types.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace semfuse {

using Gray16Image = Image<std::uint16_t>;

RgbImage read_rgb_png(const std::filesystem::path& path);
Gray16Image read_gray16_png(const std::filesystem::path& path);

void write_rgb_png(const std::filesystem::path& path, const RgbImage& image);
void write_gray16_png(const std::filesystem::path& path, const Gray16Image& image);

// In-memory PNG encoding (for backend image attachments).
std::vector<std::uint8_t> encode_rgb_png(const RgbImage& image);

}  // namespace semfuse
