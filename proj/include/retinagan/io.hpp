#pragma once

#include <filesystem>

#include "retinagan/image.hpp"

namespace retinagan::io {

/// 8-bit grayscale PNG; values are clamped to [0, 1] and rounded.
void write_gray8(const std::filesystem::path& path, const Image& image);
/// 16-bit grayscale PNG, for inputs that feed training.
void write_gray16(const std::filesystem::path& path, const Image& image);
/// Reads 8- or 16-bit grayscale PNGs into [0, 1].
Image read_gray(const std::filesystem::path& path);

/// 8-bit class-index PNG (raw indices, not scaled).
void write_labels(const std::filesystem::path& path, const LabelMap& labels);
LabelMap read_labels(const std::filesystem::path& path);

void write_rgb8(const std::filesystem::path& path, const RgbImage& image);
RgbImage read_rgb(const std::filesystem::path& path);

}  // namespace retinagan::io
