#pragma once

#include <cstdint>

#include "vesselforge/clahe.hpp"
#include "vesselforge/error.hpp"
#include "vesselforge/morphology.hpp"
#include "vesselforge/raster.hpp"

namespace vf {

/// value = 0.30 R + 0.59 G + 0.11 B, rounded half away from zero. Evaluated
/// in integer hundredths so the result is exact.
inline Raster to_grayscale(const Raster& rgb) {
  require(rgb.channels == 3, Errc::WrongChannelCount, "to_grayscale expects 3 channels");
  Raster out(rgb.width, rgb.height, 1);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const int r = rgb.data[3 * i], g = rgb.data[3 * i + 1], b = rgb.data[3 * i + 2];
    const int hundredths = 30 * r + 59 * g + 11 * b;
    out.data[i] = static_cast<std::uint8_t>(std::min(255, (hundredths + 50) / 100));
  }
  return out;
}

inline Raster negate(const Raster& gray) {
  require_gray(gray, "negate");
  Raster out(gray.width, gray.height, 1);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = static_cast<std::uint8_t>(255 - gray.data[i]);
  return out;
}

struct PreprocessConfig {
  SeShape se_shape = SeShape::Disk;
  int se_radius = 8;
  ClaheConfig clahe;
};

/// grayscale -> negative -> white top-hat -> CLAHE. After the negative,
/// vessels are bright ridges, which the white top-hat isolates.
inline Raster preprocess_pipeline(const Raster& rgb, const StructuringElement& se, const ClaheConfig& cfg) {
  return clahe(white_tophat(negate(to_grayscale(rgb)), se), cfg);
}

inline Raster preprocess_pipeline(const Raster& rgb, const PreprocessConfig& cfg) {
  return preprocess_pipeline(rgb, StructuringElement::make(cfg.se_shape, cfg.se_radius), cfg.clahe);
}

}  // namespace vf
