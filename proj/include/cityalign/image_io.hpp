#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace cityalign {

// Interleaved 8-bit image.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> data;

  Image() = default;
  Image(int w, int h, int c = 3) : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, 0) {}

  std::uint8_t* pixel(int x, int y) { return data.data() + (static_cast<std::size_t>(y) * width + x) * channels; }
  const std::uint8_t* pixel(int x, int y) const {
    return data.data() + (static_cast<std::size_t>(y) * width + x) * channels;
  }
  bool operator==(const Image&) const = default;
};

// Reads any PNG and converts it to 8-bit RGB.
Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& image);
std::vector<std::uint8_t> encode_png(const Image& image);

void write_png_gray16(const std::filesystem::path& path, int width, int height, const std::vector<std::uint16_t>& data);
std::vector<std::uint16_t> read_png_gray16(const std::filesystem::path& path, int& width, int& height);

// Little-endian PFM ("Pf" for one channel, "PF" for three). Rows are stored
// top to bottom in memory and bottom to top on disk, as the format requires.
void write_pfm(const std::filesystem::path& path, int width, int height, int channels, const std::vector<float>& data);
std::vector<float> read_pfm(const std::filesystem::path& path, int& width, int& height, int& channels);

}  // namespace cityalign
