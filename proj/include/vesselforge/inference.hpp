#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "vesselforge/metrics.hpp"
#include "vesselforge/patch.hpp"
#include "vesselforge/unet.hpp"

namespace vf {

/// Whole-image prediction: strided grid, model over patch batches, average
/// of overlapping outputs. `image` must already be preprocessed.
inline ProbMap predict_image(const Raster& image, const ParamSet<float>& params, int patch, int stride,
                             int batch_size = 32) {
  const PatchGrid grid = make_test_grid(image.height, image.width, patch, patch, stride);
  const PatchSet set = extract_test_patches(image, grid);
  Tensor<float> probs(set.size(), 1, patch, patch);
  const std::size_t bs = static_cast<std::size_t>(std::max(1, batch_size));
  const std::size_t ps = set.patches.sample_size();
  for (std::size_t start = 0; start < set.size(); start += bs) {
    const std::size_t count = std::min(bs, set.size() - start);
    Tensor<float> x(count, 1, patch, patch);
    std::copy_n(set.patches.sample(start), count * ps, x.data());
    const auto out = model_forward(x, params);
    std::copy_n(out.probs.data(), count * ps, probs.sample(start));
  }
  return stitch(probs, grid);
}

/// One test image: preprocessed raster plus its annotation and FOV.
struct EvalImage {
  std::string name;
  Raster image;
  FovMask gt;
  FovMask fov;
};

struct DatasetReport {
  std::vector<std::pair<std::string, MetricsReport>> per_image;
  MetricsReport pooled;
  std::vector<ProbMap> maps;
};

/// Per-image metrics plus pooled metrics over all images' FOV pixels
/// (global confusion counts and one ROC over the concatenated scores in
/// image order).
inline MetricsReport pooled_metrics(const std::vector<ProbMap>& maps, const std::vector<EvalImage>& images,
                                    double threshold) {
  MetricsReport pooled;
  pooled.threshold = threshold;
  std::vector<float> scores;
  std::vector<std::uint8_t> labels;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto m = confusion_at(maps[i], images[i].gt, images[i].fov, threshold);
    pooled.tp += m.tp;
    pooled.fp += m.fp;
    pooled.tn += m.tn;
    pooled.fn += m.fn;
    collect_fov(maps[i], images[i].gt, images[i].fov, scores, labels);
  }
  pooled.finalize_rates();
  auto roc = roc_auc<float>(scores, labels);
  pooled.auc = roc.auc;
  pooled.roc = std::move(roc.points);
  return pooled;
}

inline MetricsReport image_metrics(const ProbMap& map, const EvalImage& img, double threshold) {
  auto m = confusion_at(map, img.gt, img.fov, threshold);
  std::uint64_t pos = m.tp + m.fn, neg = m.tn + m.fp;
  if (pos > 0 && neg > 0) {
    auto roc = roc_auc(map, img.gt, img.fov);
    m.auc = roc.auc;
    m.roc = std::move(roc.points);
  }
  return m;
}

inline DatasetReport evaluate_dataset(const ParamSet<float>& params, const std::vector<EvalImage>& images, int patch,
                                      int stride, double threshold = 0.5, int batch_size = 32) {
  require(!images.empty(), Errc::MissingFiles, "no test images to evaluate");
  DatasetReport rep;
  for (const auto& img : images) {
    rep.maps.push_back(predict_image(img.image, params, patch, stride, batch_size));
    rep.per_image.emplace_back(img.name, image_metrics(rep.maps.back(), img, threshold));
  }
  rep.pooled = pooled_metrics(rep.maps, images, threshold);
  return rep;
}

}  // namespace vf
