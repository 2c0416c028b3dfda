#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace eanet {

/// Interleaved HWC image with float samples in [0, 255].
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int w, int h, int c, float fill = 0.0f)
      : width(w), height(h), channels(c), pixels(static_cast<std::size_t>(w) * h * c, fill) {
    if (w <= 0 || h <= 0 || c <= 0) throw std::invalid_argument("Image: non-positive extent");
  }

  float& at(int x, int y, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  float at(int x, int y, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }

  bool empty() const { return pixels.empty(); }
  friend bool operator==(const Image&, const Image&) = default;
};

/// Replicates a single-channel image to three channels.
inline Image replicate_to_rgb(const Image& gray) {
  if (gray.channels == 3) return gray;
  if (gray.channels != 1) throw std::invalid_argument("replicate_to_rgb: expected 1 channel");
  Image out(gray.width, gray.height, 3);
  for (std::size_t i = 0; i < gray.pixels.size(); ++i) {
    out.pixels[3 * i] = out.pixels[3 * i + 1] = out.pixels[3 * i + 2] = gray.pixels[i];
  }
  return out;
}

}  // namespace eanet
