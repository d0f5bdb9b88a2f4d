#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "vesselforge/error.hpp"
#include "vesselforge/raster.hpp"

namespace vf {

struct ClaheConfig {
  int tiles_x = 8;
  int tiles_y = 8;
  /// Multiple of the uniform bin height (tile_pixels / 256) at which bins are clipped.
  double clip_limit = 2.0;
};

/// Round half away from zero, clamped to the 8-bit range.
inline std::uint8_t quantize(double v) {
  const long r = std::lround(v);
  return static_cast<std::uint8_t>(std::clamp(r, 0L, 255L));
}

namespace detail {

using Lut = std::array<std::uint8_t, 256>;

// Tile i covers [bounds[i], bounds[i+1]).
inline std::vector<int> tile_bounds(int extent, int tiles) {
  std::vector<int> b(tiles + 1);
  for (int i = 0; i <= tiles; ++i)
    b[i] = static_cast<int>(static_cast<long long>(i) * extent / tiles);
  return b;
}

inline Lut tile_mapping(const Raster& in, int x0, int x1, int y0, int y1, double clip_limit) {
  std::array<long, 256> counts{};
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) ++counts[in.at(y, x)];
  const long pixels = static_cast<long>(x1 - x0) * (y1 - y0);

  Lut lut;
  for (int v = 0; v < 256; ++v) lut[v] = static_cast<std::uint8_t>(v);
  int vmin = 0;
  while (counts[vmin] == 0) ++vmin;
  // A single occupied bin means the tile is flat: identity mapping.
  if (counts[vmin] == pixels) return lut;

  const double limit = clip_limit * static_cast<double>(pixels) / 256.0;
  std::array<double, 256> hist{};
  double excess = 0.0;
  for (int v = 0; v < 256; ++v) {
    const double c = static_cast<double>(counts[v]);
    hist[v] = std::min(c, limit);
    excess += c - hist[v];
  }
  const double share = excess / 256.0;
  std::array<double, 256> cdf{};
  double acc = 0.0;
  for (int v = 0; v < 256; ++v) {
    acc += hist[v] + share;
    cdf[v] = acc;
  }
  const double cdf_min = cdf[vmin];
  const double denom = static_cast<double>(pixels) - cdf_min;
  if (!(denom > 0.0)) return lut;
  for (int v = 0; v < 256; ++v) lut[v] = quantize(255.0 * (cdf[v] - cdf_min) / denom);
  return lut;
}

// Index of the left tile centre and weight of the right one for coordinate p.
inline std::pair<int, double> interp_coord(double p, const std::vector<double>& centers) {
  const int n = static_cast<int>(centers.size());
  if (p <= centers.front()) return {0, 0.0};
  if (p >= centers.back()) return {n - 1, 0.0};
  int i = 0;
  while (i + 1 < n && centers[i + 1] <= p) ++i;
  return {i, (p - centers[i]) / (centers[i + 1] - centers[i])};
}

}  // namespace detail

/// Contrast-limited adaptive histogram equalization.
///
/// Each tile's 256-bin histogram is clipped at clip_limit * tile_pixels / 256
/// and the clipped excess spread evenly over all bins (single pass). The tile
/// mapping is round(255 (cdf(v) - cdf_min) / (tile_pixels - cdf_min)), where
/// cdf_min is the cdf at the darkest intensity present; flat tiles map to
/// themselves. Output pixels blend the four nearest tile mappings
/// bilinearly, with edge tiles extended to the border.
inline Raster clahe(const Raster& gray, const ClaheConfig& cfg) {
  require_gray(gray, "clahe");
  require(cfg.tiles_x >= 1 && cfg.tiles_y >= 1, Errc::DegenerateTiling, "tile counts must be >= 1");
  require(cfg.clip_limit >= 1.0, Errc::InvalidArgument, "clip_limit must be >= 1");
  require(gray.width >= cfg.tiles_x && gray.height >= cfg.tiles_y, Errc::DegenerateTiling,
          "image smaller than the tile grid");

  const auto bx = detail::tile_bounds(gray.width, cfg.tiles_x);
  const auto by = detail::tile_bounds(gray.height, cfg.tiles_y);
  std::vector<detail::Lut> luts(static_cast<std::size_t>(cfg.tiles_x) * cfg.tiles_y);
  for (int ty = 0; ty < cfg.tiles_y; ++ty)
    for (int tx = 0; tx < cfg.tiles_x; ++tx)
      luts[static_cast<std::size_t>(ty) * cfg.tiles_x + tx] =
          detail::tile_mapping(gray, bx[tx], bx[tx + 1], by[ty], by[ty + 1], cfg.clip_limit);

  std::vector<double> cx(cfg.tiles_x), cy(cfg.tiles_y);
  for (int i = 0; i < cfg.tiles_x; ++i) cx[i] = 0.5 * (bx[i] + bx[i + 1] - 1);
  for (int i = 0; i < cfg.tiles_y; ++i) cy[i] = 0.5 * (by[i] + by[i + 1] - 1);

  std::vector<std::pair<int, double>> col(gray.width);
  for (int x = 0; x < gray.width; ++x) col[x] = detail::interp_coord(x, cx);

  Raster out(gray.width, gray.height, 1);
  for (int y = 0; y < gray.height; ++y) {
    const auto [ty, wy] = detail::interp_coord(y, cy);
    const int ty1 = std::min(ty + 1, cfg.tiles_y - 1);
    for (int x = 0; x < gray.width; ++x) {
      const auto [tx, wx] = col[x];
      const int tx1 = std::min(tx + 1, cfg.tiles_x - 1);
      const auto v = gray.at(y, x);
      const double tl = luts[static_cast<std::size_t>(ty) * cfg.tiles_x + tx][v];
      const double tr = luts[static_cast<std::size_t>(ty) * cfg.tiles_x + tx1][v];
      const double bl = luts[static_cast<std::size_t>(ty1) * cfg.tiles_x + tx][v];
      const double br = luts[static_cast<std::size_t>(ty1) * cfg.tiles_x + tx1][v];
      const double top = tl + wx * (tr - tl);
      const double bottom = bl + wx * (br - bl);
      out.at(y, x) = quantize(top + wy * (bottom - top));
    }
  }
  return out;
}

}  // namespace vf
