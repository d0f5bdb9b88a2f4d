#pragma once

// Grayscale erosion, dilation, opening and white top-hat with flat
// structuring elements. Out-of-image samples are neutral for the operator
// (255 under min, 0 under max), so no artificial rim appears at borders.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <utility>
#include <vector>

#include "vesselforge/error.hpp"
#include "vesselforge/raster.hpp"

namespace vf {

enum class SeShape { Disk, Square };

struct Offset {
  int dy = 0;
  int dx = 0;
  auto operator<=>(const Offset&) const = default;
};

/// Origin-centred flat structuring element. Offsets are symmetric under
/// negation and always contain (0, 0).
struct StructuringElement {
  SeShape shape = SeShape::Disk;
  int radius = 0;
  std::vector<Offset> offsets;

  static StructuringElement disk(int r) {
    require(r >= 0, Errc::InvalidArgument, "structuring element radius must be >= 0");
    StructuringElement se{SeShape::Disk, r, {}};
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx)
        if (dy * dy + dx * dx <= r * r) se.offsets.push_back({dy, dx});
    return se;
  }

  static StructuringElement square(int r) {
    require(r >= 0, Errc::InvalidArgument, "structuring element radius must be >= 0");
    StructuringElement se{SeShape::Square, r, {}};
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx) se.offsets.push_back({dy, dx});
    return se;
  }

  static StructuringElement make(SeShape shape, int r) {
    return shape == SeShape::Disk ? disk(r) : square(r);
  }
};

namespace detail {

struct Run {
  int dy, lo, hi;
};

// Decompose the element into horizontal runs of consecutive dx per dy.
inline std::vector<Run> horizontal_runs(const StructuringElement& se) {
  std::map<int, std::vector<int>> rows;
  for (const auto& o : se.offsets) rows[o.dy].push_back(o.dx);
  std::vector<Run> runs;
  for (auto& [dy, xs] : rows) {
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
    std::size_t start = 0;
    for (std::size_t i = 1; i <= xs.size(); ++i) {
      if (i == xs.size() || xs[i] != xs[i - 1] + 1) {
        runs.push_back({dy, xs[start], xs[i - 1]});
        start = i;
      }
    }
  }
  return runs;
}

// Sliding-window extremum over each row for the window [x+lo, x+hi], using
// the van Herk / Gil-Werman block decomposition (three comparisons per
// sample independent of window length).
template <class Op>
void row_extremum(const Raster& in, int lo, int hi, std::uint8_t neutral, Op op,
                  std::vector<std::uint8_t>& out) {
  const int w = in.width;
  const int len = hi - lo + 1;
  const int n = w + len - 1;
  const int blocks = (n + len - 1) / len;
  const int padded = blocks * len;
  std::vector<std::uint8_t> buf(padded), pre(padded), suf(padded);
  out.resize(in.pixel_count());
  for (int y = 0; y < in.height; ++y) {
    const std::uint8_t* row = &in.data[static_cast<std::size_t>(y) * w];
    for (int k = 0; k < padded; ++k) {
      const int x = k + lo;
      buf[k] = (k < n && x >= 0 && x < w) ? row[x] : neutral;
    }
    for (int b = 0; b < padded; b += len) {
      pre[b] = buf[b];
      for (int k = 1; k < len; ++k) pre[b + k] = op(pre[b + k - 1], buf[b + k]);
      suf[b + len - 1] = buf[b + len - 1];
      for (int k = len - 2; k >= 0; --k) suf[b + k] = op(suf[b + k + 1], buf[b + k]);
    }
    std::uint8_t* dst = &out[static_cast<std::size_t>(y) * w];
    for (int x = 0; x < w; ++x) dst[x] = op(suf[x], pre[x + len - 1]);
  }
}

template <class Op>
Raster flat_filter(const Raster& in, const StructuringElement& se, std::uint8_t neutral, Op op) {
  require_gray(in, "morphology");
  require(!se.offsets.empty(), Errc::InvalidArgument, "empty structuring element");
  Raster out(in.width, in.height, 1, neutral);
  std::map<std::pair<int, int>, std::vector<std::uint8_t>> row_cache;
  std::vector<std::uint8_t> tmp;
  for (const auto& run : horizontal_runs(se)) {
    auto key = std::make_pair(run.lo, run.hi);
    auto it = row_cache.find(key);
    if (it == row_cache.end()) {
      row_extremum(in, run.lo, run.hi, neutral, op, tmp);
      it = row_cache.emplace(key, tmp).first;
    }
    const auto& rows = it->second;
    for (int y = 0; y < in.height; ++y) {
      const int sy = y + run.dy;
      if (sy < 0 || sy >= in.height) continue;
      const std::uint8_t* src = &rows[static_cast<std::size_t>(sy) * in.width];
      std::uint8_t* dst = &out.data[static_cast<std::size_t>(y) * in.width];
      for (int x = 0; x < in.width; ++x) dst[x] = op(dst[x], src[x]);
    }
  }
  return out;
}

struct MinOp {
  std::uint8_t operator()(std::uint8_t a, std::uint8_t b) const { return a < b ? a : b; }
};
struct MaxOp {
  std::uint8_t operator()(std::uint8_t a, std::uint8_t b) const { return a > b ? a : b; }
};

}  // namespace detail

inline Raster erode(const Raster& gray, const StructuringElement& se) {
  return detail::flat_filter(gray, se, 255, detail::MinOp{});
}

inline Raster dilate(const Raster& gray, const StructuringElement& se) {
  return detail::flat_filter(gray, se, 0, detail::MaxOp{});
}

inline Raster opening(const Raster& gray, const StructuringElement& se) {
  return dilate(erode(gray, se), se);
}

/// Input minus its opening: keeps bright structures narrower than the element.
inline Raster white_tophat(const Raster& gray, const StructuringElement& se) {
  const Raster open = opening(gray, se);
  Raster out(gray.width, gray.height, 1);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = static_cast<std::uint8_t>(gray.data[i] - open.data[i]);
  return out;
}

}  // namespace vf
