#pragma once

#include <filesystem>

#include "splitgs/image.hpp"

namespace splitgs {

/// Write an 8-bit PNG (1 or 3 channels). Atomic: temp file + rename.
void write_png(const std::filesystem::path& path, const ImageU8& img);

/// Read an 8-bit PNG as gray or RGB (paletted/alpha inputs are converted).
ImageU8 read_png(const std::filesystem::path& path);

/// Write a single-channel float32 PFM, little-endian (scale -1). Atomic.
void write_pfm(const std::filesystem::path& path, const Image<float>& img);

/// Read a single-channel PFM.
Image<float> read_pfm(const std::filesystem::path& path);

}  // namespace splitgs
