#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vesselforge/error.hpp"

namespace vf {

/// 8-bit image, row-major, channel-interleaved. Channels is 1 or 3.
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> data;

  Raster() = default;
  Raster(int w, int h, int c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * h * c, fill) {
    require(w >= 0 && h >= 0, Errc::InvalidArgument, "negative raster dimensions");
    require(c == 1 || c == 3, Errc::WrongChannelCount,
            "raster must have 1 or 3 channels, got " + std::to_string(c));
  }
  Raster(int w, int h, int c, std::vector<std::uint8_t> samples) : Raster(w, h, c) {
    require(samples.size() == data.size(), Errc::DimensionMismatch,
            "sample count does not match raster dimensions");
    data = std::move(samples);
  }

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

  std::uint8_t& at(int y, int x, int ch = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + ch];
  }
  std::uint8_t at(int y, int x, int ch = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + ch];
  }

  bool operator==(const Raster&) const = default;
};

/// Binary field-of-view (or ground-truth) mask; values are exactly 0 or 1.
struct FovMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  FovMask() = default;
  FovMask(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill ? 1 : 0) {}

  std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }

  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : data) n += v;
    return n;
  }

  bool operator==(const FovMask&) const = default;
};

inline void require_gray(const Raster& r, const char* who) {
  require(r.channels == 1, Errc::WrongChannelCount,
          std::string(who) + " expects a single-channel raster");
}

}  // namespace vf
