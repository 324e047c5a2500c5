#ifndef PSOP_IMAGE_H_
#define PSOP_IMAGE_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "psop/stream_model.h"

namespace psop {

// 8-bit interleaved RGB.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int w, int h);

  std::uint8_t& at(int x, int y, int c) {
    return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

// Binary PPM (P6, maxval 255).
Image ReadPpm(std::istream& in);
Image ReadPpm(const std::filesystem::path& path);
void WritePpm(std::ostream& out, const Image& image);

// Separable Gaussian blur (radius ceil(3 sigma)) applied inside each box only,
// reflecting at the box borders. Boxes are clipped to the image; a box fully
// outside the image is skipped with a warning. Pixels outside every box are
// left untouched.
Image BlurRegions(const Image& frame, std::span<const Box2D> boxes,
                  double sigma = 6.0,
                  std::vector<std::string>* warnings = nullptr);

}  // namespace psop

#endif  // PSOP_IMAGE_H_
