#include "memeguard/corpus/image_hash.h"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace memeguard::corpus {

uint64_t DifferenceHash(const DownsampledGrid& grid) {
  uint64_t hash = 0;
  for (int row = 0; row < 8; ++row) {
    for (int col = 0; col < 8; ++col) {
      const uint8_t left = grid[row * 9 + col];
      const uint8_t right = grid[row * 9 + col + 1];
      hash = (hash << 1) | (right > left ? 1u : 0u);
    }
  }
  return hash;
}

std::optional<uint64_t> DifferenceHashFile(const std::filesystem::path& path) {
  cv::Mat gray;
  try {
    gray = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  } catch (const cv::Exception&) {
    return std::nullopt;
  }
  if (gray.empty()) return std::nullopt;
  cv::Mat small;
  cv::resize(gray, small, cv::Size(9, 8), 0, 0, cv::INTER_AREA);
  DownsampledGrid grid{};
  for (int row = 0; row < 8; ++row) {
    for (int col = 0; col < 9; ++col) {
      grid[row * 9 + col] = small.at<uint8_t>(row, col);
    }
  }
  return DifferenceHash(grid);
}

}  // namespace memeguard::corpus
