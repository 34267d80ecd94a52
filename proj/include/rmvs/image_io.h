#pragma once

#include <functional>
#include <string>

#include "rmvs/image.h"

namespace rmvs {

// 8- or 16-bit grayscale/RGB PNG (alpha dropped, palettes expanded) scaled to
// [0, 1].
Image ReadImagePng(const std::string& path);
// bit_depth is 8 or 16. Values are clamped to [0, 1] and rounded.
void WriteImagePng(const std::string& path, const Image& img, int bit_depth = 16);
void WriteMaskPng(const std::string& path, const Grid<uint8_t>& mask);
Grid<uint8_t> ReadMaskPng(const std::string& path);

// Single-channel PFM ("Pf"), little-endian (negative scale), rows stored
// bottom-up. Values are stored as float32.
void WritePfm(const std::string& path, const Grid<double>& map);
Grid<double> ReadPfm(const std::string& path);

// Writes via a sibling temporary file and renames it into place.
void WriteFileAtomically(const std::string& path,
                         const std::function<void(const std::string&)>& writer);

}  // namespace rmvs
