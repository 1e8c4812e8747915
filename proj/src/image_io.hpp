#pragma once

#include <filesystem>

#include "image.hpp"

namespace flowstyle {

// Reads 8-bit PNG (gray, RGB, or RGBA; alpha is dropped) or binary PPM (P6).
// The format is chosen from the file contents, not the extension.
ImageTensor read_image(const std::filesystem::path& path);

// Writes PNG or PPM depending on the extension (".ppm" selects P6). Values
// are clamped to [0,1] and rounded to 8 bits.
void write_image(const ImageTensor& image, const std::filesystem::path& path);

ImageTensor read_ppm(const std::filesystem::path& path);
void write_ppm(const ImageTensor& image, const std::filesystem::path& path);
ImageTensor read_png(const std::filesystem::path& path);
void write_png(const ImageTensor& image, const std::filesystem::path& path);

// Rounds to the nearest 8-bit level, i.e. what a write/read round trip yields.
ImageTensor quantize_8bit(const ImageTensor& image);

}  // namespace flowstyle
