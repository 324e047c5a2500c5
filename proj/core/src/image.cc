#include "psop/image.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "psop/error.h"

namespace psop {
namespace {

// Next whitespace-separated header token, skipping '#' comments.
std::string HeaderToken(std::istream& in) {
  std::string token;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!token.empty()) break;
      continue;
    }
    token.push_back(static_cast<char>(c));
  }
  return token;
}

int HeaderInt(std::istream& in) {
  const std::string t = HeaderToken(in);
  try {
    std::size_t used = 0;
    const int v = std::stoi(t, &used);
    if (used != t.size() || v <= 0) throw std::invalid_argument(t);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::kMalformedImage, "bad PPM header field '" + t + "'");
  }
}

std::size_t Mirror(std::int64_t i, std::int64_t n) {
  const std::int64_t period = 2 * n;
  std::int64_t m = i % period;
  if (m < 0) m += period;
  if (m >= n) m = period - 1 - m;
  return static_cast<std::size_t>(m);
}

}  // namespace

Image::Image(int w, int h)
    : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0) {}

Image ReadPpm(std::istream& in) {
  if (HeaderToken(in) != "P6") {
    throw Error(ErrorCode::kMalformedImage, "not a binary PPM (P6)");
  }
  const int w = HeaderInt(in);
  const int h = HeaderInt(in);
  const int maxval = HeaderInt(in);
  if (maxval != 255) {
    throw Error(ErrorCode::kMalformedImage, "only 8-bit PPM is supported");
  }
  Image image(w, h);
  in.read(reinterpret_cast<char*>(image.rgb.data()),
          static_cast<std::streamsize>(image.rgb.size()));
  if (in.gcount() != static_cast<std::streamsize>(image.rgb.size())) {
    throw Error(ErrorCode::kMalformedImage, "truncated PPM payload");
  }
  if (in.peek() != EOF) {
    throw Error(ErrorCode::kMalformedImage, "trailing bytes after PPM payload");
  }
  return image;
}

Image ReadPpm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoOpen, "cannot open " + path.string());
  return ReadPpm(in);
}

void WritePpm(std::ostream& out, const Image& image) {
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.rgb.data()),
            static_cast<std::streamsize>(image.rgb.size()));
}

Image BlurRegions(const Image& frame, std::span<const Box2D> boxes,
                  double sigma, std::vector<std::string>* warnings) {
  Image out = frame;
  if (!(sigma > 0.0)) return out;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel;
  double total = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    kernel.push_back(std::exp(-0.5 * k * k / (sigma * sigma)));
    total += kernel.back();
  }
  for (double& v : kernel) v /= total;

  for (const Box2D& box : boxes) {
    const int x0 = std::max(0, static_cast<int>(std::floor(box.x)));
    const int y0 = std::max(0, static_cast<int>(std::floor(box.y)));
    const int x1 = std::min(frame.width, static_cast<int>(std::ceil(box.x + box.w)));
    const int y1 = std::min(frame.height, static_cast<int>(std::ceil(box.y + box.h)));
    if (x1 <= x0 || y1 <= y0) {
      if (warnings) warnings->push_back("box outside the image; skipped");
      continue;
    }
    const int w = x1 - x0;
    const int h = y1 - y0;
    std::vector<double> plane(static_cast<std::size_t>(w) * h);
    std::vector<double> tmp(plane.size());
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          plane[static_cast<std::size_t>(y) * w + x] = out.at(x0 + x, y0 + y, c);
        }
      }
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          double acc = 0.0;
          for (int k = -radius; k <= radius; ++k) {
            acc += kernel[static_cast<std::size_t>(k + radius)] *
                   plane[static_cast<std::size_t>(y) * w + Mirror(x + k, w)];
          }
          tmp[static_cast<std::size_t>(y) * w + x] = acc;
        }
      }
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          double acc = 0.0;
          for (int k = -radius; k <= radius; ++k) {
            acc += kernel[static_cast<std::size_t>(k + radius)] *
                   tmp[Mirror(y + k, h) * static_cast<std::size_t>(w) + x];
          }
          out.at(x0 + x, y0 + y, c) =
              static_cast<std::uint8_t>(std::clamp(std::lround(acc), 0L, 255L));
        }
      }
    }
  }
  return out;
}

}  // namespace psop
