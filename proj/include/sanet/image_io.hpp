#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

namespace sanet {

/// 8-bit interleaved image (1 = gray, 3 = RGB).
struct Image8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> pixels;
};

class ImageDecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reads PNG (any colour type, returned as RGB or gray) or binary/ASCII PGM.
Image8 read_image(const std::filesystem::path& path);

void write_png(const Image8& image, const std::filesystem::path& path);
void write_pgm(const Image8& image, const std::filesystem::path& path);

/// Luminance 0.299 R + 0.587 G + 0.114 B scaled to [0,1]; gray images map v/255.
std::vector<float> to_gray_unit(const Image8& image);

/// Bilinear resampling with half-pixel centres.
std::vector<float> resize_bilinear(const std::vector<float>& src, std::size_t src_w, std::size_t src_h,
                                   std::size_t dst_w, std::size_t dst_h);

/// Rounds [0,1] floats to 8-bit.
std::uint8_t to_byte(float v);

}  // namespace sanet
