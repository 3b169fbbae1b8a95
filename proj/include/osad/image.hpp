#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace osad {

// 8-bit raster, row-major, interleaved channels (1 = gray, 3 = RGB).
struct ImageU8 {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t& at(int y, int x, int c) {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int y, int x, int c) const {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  static ImageU8 make(int w, int h, int c, std::uint8_t fill = 0) {
    return ImageU8{w, h, c, std::vector<std::uint8_t>(static_cast<size_t>(w) * h * c, fill)};
  }
};

// Decodes PNG or JPEG (sniffed by magic bytes). Alpha is dropped, palette
// expanded; result has 1 or 3 channels. Throws DataError on failure.
ImageU8 read_image(const std::filesystem::path& path);

// Writes gray (1ch) or RGB (3ch) PNG with fixed encoder settings so repeated
// runs produce identical bytes.
void write_png(const std::filesystem::path& path, const ImageU8& img);

ImageU8 resize_bilinear(const ImageU8& img, int out_w, int out_h);
ImageU8 resize_nearest(const ImageU8& img, int out_w, int out_h);
ImageU8 flip_horizontal(const ImageU8& img);
ImageU8 crop(const ImageU8& img, int x0, int y0, int w, int h);

}  // namespace osad
