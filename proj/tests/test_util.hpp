#pragma once

// Shared fixtures and independent oracles for the test suites. Nothing in
// here calls the optimized code paths it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <random>
#include <vector>

#include "vesselforge/morphology.hpp"
#include "vesselforge/patch.hpp"
#include "vesselforge/raster.hpp"
#include "vesselforge/raster_io.hpp"
#include "vesselforge/tensor.hpp"

namespace vf::testing {

inline Raster random_gray(int w, int h, std::mt19937_64& rng) {
  Raster r(w, h, 1);
  std::uniform_int_distribution<int> d(0, 255);
  for (auto& v : r.data) v = static_cast<std::uint8_t>(d(rng));
  return r;
}

template <class T>
Tensor<T> random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(s);
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : t.vec()) v = static_cast<T>(d(rng));
  return t;
}

/// Double loop over every pixel and every offset; out-of-image samples take
/// the neutral value.
inline Raster brute_morph(const Raster& in, const StructuringElement& se, bool is_min) {
  Raster out(in.width, in.height, 1);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x) {
      int acc = is_min ? 255 : 0;
      for (const auto& o : se.offsets) {
        const int sy = y + o.dy, sx = x + o.dx;
        int v = is_min ? 255 : 0;
        if (sy >= 0 && sy < in.height && sx >= 0 && sx < in.width) v = in.at(sy, sx);
        acc = is_min ? std::min(acc, v) : std::max(acc, v);
      }
      out.at(y, x) = static_cast<std::uint8_t>(acc);
    }
  return out;
}

inline Raster brute_opening(const Raster& in, const StructuringElement& se) {
  return brute_morph(brute_morph(in, se, true), se, false);
}

/// Central finite difference of `loss` with respect to `x`, evaluated in
/// double precision.
inline double central_difference(double& x, const std::function<double()>& loss, double h = 1e-6) {
  const double saved = x;
  x = saved + h;
  const double up = loss();
  x = saved - h;
  const double down = loss();
  x = saved;
  return (up - down) / (2.0 * h);
}

inline double relative_error(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

/// Maximum relative error between analytic gradient `g` and finite
/// differences of `loss` over every element of `x` with |g| > floor.
inline double max_fd_error(Tensor<double>& x, const Tensor<double>& g, const std::function<double()>& loss,
                           double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::abs(g[i]) <= floor) continue;
    const double num = central_difference(x[i], loss);
    worst = std::max(worst, relative_error(g[i], num));
  }
  return worst;
}

/// sum(r * t): a scalar probe whose gradient with respect to t is r.
inline double weighted_sum(const Tensor<double>& t, const Tensor<double>& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) s += t[i] * r[i];
  return s;
}

/// Mann-Whitney statistic by brute-force pairing; ties count one half.
template <class Score>
double pairwise_auc(const std::vector<Score>& s, const std::vector<std::uint8_t>& l) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!l[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (l[j]) continue;
      pairs += 1.0;
      if (s[i] > s[j]) wins += 1.0;
      else if (s[i] == s[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

/// Six-loop convolution written independently of the library's reference.
inline Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b, int pad) {
  const long H = static_cast<long>(x.h()), W = static_cast<long>(x.w());
  const long kh = static_cast<long>(w.h()), kw = static_cast<long>(w.w());
  const long Ho = H + 2 * pad - kh + 1, Wo = W + 2 * pad - kw + 1;
  Tensor<double> out(x.n(), w.n(), Ho, Wo);
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t k = 0; k < w.n(); ++k)
      for (long i = 0; i < Ho; ++i)
        for (long j = 0; j < Wo; ++j) {
          double acc = b[k];
          for (std::size_t c = 0; c < x.c(); ++c)
            for (long dy = 0; dy < kh; ++dy)
              for (long dx = 0; dx < kw; ++dx) {
                const long sy = i + dy - pad, sx = j + dx - pad;
                if (sy >= 0 && sy < H && sx >= 0 && sx < W) acc += x.at(n, c, sy, sx) * w.at(k, c, dy, dx);
              }
          out.at(n, k, i, j) = acc;
        }
  return out;
}

/// Synthetic "fundus-like" patch: a dim noisy background with a few bright
/// line segments that form the ground truth.
struct SyntheticPatch {
  std::vector<float> image;
  std::vector<std::uint8_t> label;
};

inline SyntheticPatch synthetic_vessels(int size, std::mt19937_64& rng) {
  SyntheticPatch p{std::vector<float>(size * size), std::vector<std::uint8_t>(size * size, 0)};
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int lines = 2 + static_cast<int>(u(rng) * 3);
  for (int k = 0; k < lines; ++k) {
    const double x0 = u(rng) * size, y0 = u(rng) * size, ang = u(rng) * 3.14159265;
    const double half_width = 0.8 + u(rng) * 1.5;
    const double dx = std::cos(ang), dy = std::sin(ang);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double dist = std::abs((x - x0) * dy - (y - y0) * dx);
        if (dist <= half_width) p.label[y * size + x] = 1;
      }
  }
  for (int i = 0; i < size * size; ++i) {
    const double base = p.label[i] ? 0.65 : 0.2;
    p.image[i] = static_cast<float>(std::clamp(base + (u(rng) - 0.5) * 0.2, 0.0, 1.0));
  }
  return p;
}

/// Labeled patch set built from synthetic_vessels.
inline PatchSet synthetic_set(std::size_t n, int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  PatchSet set;
  set.patches = Tensor<float>(n, 1, size, size);
  set.labels.resize(n * size * size);
  for (std::size_t k = 0; k < n; ++k) {
    const auto p = synthetic_vessels(size, rng);
    std::copy(p.image.begin(), p.image.end(), set.patches.sample(k));
    std::copy(p.label.begin(), p.label.end(), set.labels.begin() + k * size * size);
    set.origins.push_back({0, static_cast<std::uint32_t>(k), 0});
  }
  return set;
}

/// Writes a small dataset in DRIVE layout: colour fundus-like images with
/// dark line vessels, circular FOV masks and manual annotations. Images are
/// PNG, masks and annotations PGM.
inline void write_synthetic_drive(const std::filesystem::path& root, int n_train, int n_test, int size,
                                  std::uint64_t seed) {
  namespace fs = std::filesystem;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto write_split = [&](const std::string& split, int first_id, int count) {
    if (count == 0) return;
    for (const char* d : {"images", "mask", "1st_manual"}) fs::create_directories(root / split / d);
    for (int k = 0; k < count; ++k) {
      const int id = first_id + k;
      const auto p = synthetic_vessels(size, rng);
      Raster img(size, size, 3), mask(size, size, 1), manual(size, size, 1);
      const double c = (size - 1) / 2.0, r = size * 0.48;
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
          const int i = y * size + x;
          const bool in_fov = (x - c) * (x - c) + (y - c) * (y - c) <= r * r;
          mask.at(y, x) = in_fov ? 255 : 0;
          manual.at(y, x) = p.label[i] && in_fov ? 255 : 0;
          const double dark = manual.at(y, x) ? 0.55 : 1.0;
          const double noise = 0.9 + 0.2 * u(rng);
          const double bg = in_fov ? 1.0 : 0.05;
          img.at(y, x, 0) = static_cast<std::uint8_t>(std::min(255.0, 200 * dark * noise * bg));
          img.at(y, x, 1) = static_cast<std::uint8_t>(std::min(255.0, 110 * dark * noise * bg));
          img.at(y, x, 2) = static_cast<std::uint8_t>(std::min(255.0, 50 * dark * noise * bg));
        }
      const std::string num = (id < 10 ? "0" : "") + std::to_string(id);
      save_raster(img, root / split / "images" / (num + "_" + split + ".png"));
      save_raster(mask, root / split / "mask" / (num + "_" + split + "_mask.pgm"));
      save_raster(manual, root / split / "1st_manual" / (num + "_manual1.pgm"));
    }
  };
  write_split("training", 21, n_train);
  write_split("test", 1, n_test);
}

}  // namespace vf::testing
