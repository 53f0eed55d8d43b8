#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "saml/grid.hpp"

namespace saml::png_io {

/// Read any PNG as 8-bit RGB (palette expanded, alpha stripped, gray replicated).
RgbImage read_rgb8(const std::filesystem::path& path);

/// Read an 8-bit grayscale PNG. Throws InputError on other color types.
Grid<uint8_t> read_gray8(const std::filesystem::path& path);

/// Read the raw per-pixel values of an indexed-color (palette) or grayscale
/// PNG without color expansion. This is how label maps come back as class
/// indices rather than palette colors.
Grid<uint8_t> read_index8(const std::filesystem::path& path);

void write_rgb8(const std::filesystem::path& path, const RgbImage& img);

void write_gray8(const std::filesystem::path& path, const Grid<uint8_t>& img);

/// Write an indexed-color PNG with the given palette; pixel values are
/// palette indices and must all be < palette.size().
void write_indexed8(const std::filesystem::path& path, const Grid<uint8_t>& img,
                    const std::vector<std::array<uint8_t, 3>>& palette);

/// Palette used for label map PNGs: 0 background, 1 podocyte, 2 mesangial.
const std::vector<std::array<uint8_t, 3>>& labelmap_palette();

}  // namespace saml::png_io
