#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <optional>

namespace memeguard::corpus {

// Grayscale samples of an image downsampled to 9 columns by 8 rows,
// row-major.
using DownsampledGrid = std::array<uint8_t, 72>;

// Difference hash: bit (row, col) is set when the pixel right of (row, col)
// is brighter than it. Bits are packed row-major, first bit most significant.
uint64_t DifferenceHash(const DownsampledGrid& grid);

// Decodes the image, converts to grayscale, resamples to 9x8 by area
// averaging and hashes. Returns nullopt for unreadable files.
std::optional<uint64_t> DifferenceHashFile(const std::filesystem::path& path);

inline int HammingDistance(uint64_t a, uint64_t b) {
  return std::popcount(a ^ b);
}

}  // namespace memeguard::corpus
