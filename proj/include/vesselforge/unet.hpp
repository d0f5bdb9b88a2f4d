#pragma once

// Scaled three-level U-net:
//
//   enc1 (C)  ------------------------------- concat -> dec1 (C) -> head -> sigmoid
//     | pool                                         ^ up1
//   enc2 (2C) ------------- concat -> dec2 (2C) -----+
//     | pool                       ^ up2
//   bott (4C) ---------------------+
//
// Every encoder/decoder/bottleneck block is two 3x3 pad-1 convolutions each
// followed by ReLU. With 48x48 input the maps are 48 -> 24 -> 12 -> 24 -> 48.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "vesselforge/error.hpp"
#include "vesselforge/layers.hpp"
#include "vesselforge/params.hpp"
#include "vesselforge/tensor.hpp"

namespace vf {

struct ModelSpec {
  int depth = 3;
  int base_channels = 32;
  int in_channels = 1;
  int out_channels = 1;

  void validate() const {
    require(depth == 3, Errc::InvalidArgument, "only depth 3 is supported");
    require(base_channels >= 1, Errc::InvalidArgument, "base_channels must be >= 1");
    require(in_channels == 1 && out_channels == 1, Errc::InvalidArgument,
            "the model is single-channel in and out");
  }
  /// Spatial dims must survive depth-1 poolings.
  static constexpr std::size_t size_multiple = 4;
};

enum class LayerKind { Conv3x3, UpConv, Head };

struct LayerDef {
  std::string name;
  LayerKind kind;
  std::size_t cin;
  std::size_t cout;

  Shape weight_shape() const {
    switch (kind) {
      case LayerKind::Conv3x3: return {cout, cin, 3, 3};
      case LayerKind::UpConv: return {cin, cout, 2, 2};
      case LayerKind::Head: return {cout, cin, 1, 1};
    }
    return {};
  }
  std::size_t fan_in() const {
    const auto s = weight_shape();
    return kind == LayerKind::UpConv ? s[0] * s[2] * s[3] : s[1] * s[2] * s[3];
  }
};

/// Layers in parameter order.
inline std::vector<LayerDef> layer_table(const ModelSpec& spec) {
  spec.validate();
  const std::size_t c = static_cast<std::size_t>(spec.base_channels);
  return {
      {"enc1.conv1", LayerKind::Conv3x3, 1, c},          {"enc1.conv2", LayerKind::Conv3x3, c, c},
      {"enc2.conv1", LayerKind::Conv3x3, c, 2 * c},      {"enc2.conv2", LayerKind::Conv3x3, 2 * c, 2 * c},
      {"bott.conv1", LayerKind::Conv3x3, 2 * c, 4 * c},  {"bott.conv2", LayerKind::Conv3x3, 4 * c, 4 * c},
      {"up2", LayerKind::UpConv, 4 * c, 2 * c},          {"dec2.conv1", LayerKind::Conv3x3, 4 * c, 2 * c},
      {"dec2.conv2", LayerKind::Conv3x3, 2 * c, 2 * c},  {"up1", LayerKind::UpConv, 2 * c, c},
      {"dec1.conv1", LayerKind::Conv3x3, 2 * c, c},      {"dec1.conv2", LayerKind::Conv3x3, c, c},
      {"head", LayerKind::Head, c, 1},
  };
}

/// Closed form of the trainable parameter total: 454 C^2 + 33 C + 1.
inline std::size_t param_count(const ModelSpec& spec) {
  spec.validate();
  const std::size_t c = static_cast<std::size_t>(spec.base_channels);
  return 454 * c * c + 33 * c + 1;
}

/// He initialization: weights ~ N(0, sqrt(2 / fan_in)) with fan_in =
/// Cin * kh * kw; biases zero.
template <class T = float>
ParamSet<T> init_params(const ModelSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParamSet<T> p;
  for (const auto& layer : layer_table(spec)) {
    Tensor<T> w(layer.weight_shape());
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(layer.fan_in())));
    for (auto& v : w.vec()) v = static_cast<T>(dist(rng));
    p.add(layer.name + ".weight", std::move(w));
    p.add(layer.name + ".bias", Tensor<T>(layer.cout, 1, 1, 1));
  }
  return p;
}

/// Throws ShapeMismatch unless `params` has exactly the layout `spec` implies.
template <class T>
void validate_params(const ParamSet<T>& params, const ModelSpec& spec) {
  const auto table = layer_table(spec);
  require(params.size() == 2 * table.size(), Errc::ShapeMismatch,
          "expected " + std::to_string(2 * table.size()) + " parameter tensors, got " +
              std::to_string(params.size()));
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& w = params[2 * i];
    const auto& b = params[2 * i + 1];
    require(w.name == table[i].name + ".weight" && b.name == table[i].name + ".bias", Errc::ShapeMismatch,
            "parameter order mismatch at " + table[i].name);
    require_shape(w.value, table[i].weight_shape(), w.name);
    require_shape(b.value, Shape{table[i].cout, 1, 1, 1}, b.name);
  }
}

/// Recovers the spec from the first layer's width.
template <class T>
ModelSpec infer_spec(const ParamSet<T>& params) {
  const auto* w = params.find("enc1.conv1.weight");
  require(w != nullptr, Errc::ShapeMismatch, "weights lack enc1.conv1.weight");
  ModelSpec spec;
  spec.base_channels = static_cast<int>(w->n());
  validate_params(params, spec);
  return spec;
}

/// Intermediate activations kept by model_forward for one backward pass.
/// Stored activations are post-ReLU, which carry the same sign information
/// the ReLU backward needs.
template <class T>
struct ForwardCache {
  const ParamSet<T>* params = nullptr;
  std::size_t base = 0;
  Tensor<T> x;
  Tensor<T> a11, e1;
  nn::PoolResult<T> pool1;
  Tensor<T> a21, e2;
  nn::PoolResult<T> pool2;
  Tensor<T> a31, b;
  Tensor<T> cat2, ad21, d2;
  Tensor<T> cat1, ad11, d1;
  Tensor<T> logits;
  bool consumed = false;
};

template <class T>
struct ForwardResult {
  Tensor<T> probs;
  ForwardCache<T> cache;
};

namespace detail {

template <class T>
Tensor<T> conv_relu(const Tensor<T>& x, const ParamSet<T>& p, const std::string& name) {
  return nn::relu_forward(nn::conv2d_forward(x, p.get(name + ".weight"), p.get(name + ".bias"), 1));
}

// Back through relu(conv(in)) where `out` is the stored post-ReLU output.
template <class T>
Tensor<T> conv_relu_backward(const Tensor<T>& in, const Tensor<T>& out, const Tensor<T>& grad_out,
                             const ParamSet<T>& p, ParamSet<T>& grads, const std::string& name) {
  auto g = nn::conv2d_backward(in, p.get(name + ".weight"), nn::relu_backward(out, grad_out), 1);
  grads.get(name + ".weight") = std::move(g.grad_w);
  grads.get(name + ".bias") = std::move(g.grad_b);
  return std::move(g.grad_x);
}

template <class T>
void add_into(Tensor<T>& acc, const Tensor<T>& v) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
}

}  // namespace detail

/// Forward pass producing per-pixel vessel probabilities. `params` must
/// outlive the returned cache.
template <class T>
ForwardResult<T> model_forward(const Tensor<T>& x, const ParamSet<T>& params) {
  const ModelSpec spec = infer_spec(params);
  require(x.c() == 1, Errc::ShapeMismatch, "model input must have one channel");
  require(x.h() % ModelSpec::size_multiple == 0 && x.w() % ModelSpec::size_multiple == 0 && x.h() > 0 &&
              x.w() > 0,
          Errc::OddSpatialDims, "model input dims must be positive multiples of 4, got " + shape_str(x.shape()));

  ForwardResult<T> r;
  auto& c = r.cache;
  c.params = &params;
  c.base = static_cast<std::size_t>(spec.base_channels);
  c.x = x;
  c.a11 = detail::conv_relu(x, params, "enc1.conv1");
  c.e1 = detail::conv_relu(c.a11, params, "enc1.conv2");
  c.pool1 = nn::maxpool_forward(c.e1);
  c.a21 = detail::conv_relu(c.pool1.out, params, "enc2.conv1");
  c.e2 = detail::conv_relu(c.a21, params, "enc2.conv2");
  c.pool2 = nn::maxpool_forward(c.e2);
  c.a31 = detail::conv_relu(c.pool2.out, params, "bott.conv1");
  c.b = detail::conv_relu(c.a31, params, "bott.conv2");
  c.cat2 = nn::concat_channels(c.e2, nn::upconv_forward(c.b, params.get("up2.weight"), params.get("up2.bias")));
  c.ad21 = detail::conv_relu(c.cat2, params, "dec2.conv1");
  c.d2 = detail::conv_relu(c.ad21, params, "dec2.conv2");
  c.cat1 = nn::concat_channels(c.e1, nn::upconv_forward(c.d2, params.get("up1.weight"), params.get("up1.bias")));
  c.ad11 = detail::conv_relu(c.cat1, params, "dec1.conv1");
  c.d1 = detail::conv_relu(c.ad11, params, "dec1.conv2");
  c.logits = nn::conv2d_forward(c.d1, params.get("head.weight"), params.get("head.bias"), 0);
  r.probs = nn::sigmoid(c.logits);
  return r;
}

/// Gradients of a scalar loss for every parameter, given dL/d(logits).
/// A cache supports exactly one backward pass.
template <class T>
ParamSet<T> model_backward(ForwardCache<T>& c, const Tensor<T>& grad_logits) {
  require(!c.consumed && c.params != nullptr, Errc::StaleCache, "forward cache already used for backward");
  c.consumed = true;
  require_shape(grad_logits, c.logits.shape(), "model_backward grad");
  const auto& p = *c.params;
  ParamSet<T> g = p.zeros_like();

  auto head = nn::conv2d_backward(c.d1, p.get("head.weight"), grad_logits, 0);
  g.get("head.weight") = std::move(head.grad_w);
  g.get("head.bias") = std::move(head.grad_b);

  auto g_ad11 = detail::conv_relu_backward(c.ad11, c.d1, head.grad_x, p, g, "dec1.conv2");
  auto g_cat1 = detail::conv_relu_backward(c.cat1, c.ad11, g_ad11, p, g, "dec1.conv1");
  auto [g_e1_skip, g_u1] = nn::split_channels(g_cat1, c.base);

  auto up1 = nn::upconv_backward(c.d2, p.get("up1.weight"), g_u1);
  g.get("up1.weight") = std::move(up1.grad_w);
  g.get("up1.bias") = std::move(up1.grad_b);

  auto g_ad21 = detail::conv_relu_backward(c.ad21, c.d2, up1.grad_x, p, g, "dec2.conv2");
  auto g_cat2 = detail::conv_relu_backward(c.cat2, c.ad21, g_ad21, p, g, "dec2.conv1");
  auto [g_e2_skip, g_u2] = nn::split_channels(g_cat2, 2 * c.base);

  auto up2 = nn::upconv_backward(c.b, p.get("up2.weight"), g_u2);
  g.get("up2.weight") = std::move(up2.grad_w);
  g.get("up2.bias") = std::move(up2.grad_b);

  auto g_a31 = detail::conv_relu_backward(c.a31, c.b, up2.grad_x, p, g, "bott.conv2");
  auto g_p2 = detail::conv_relu_backward(c.pool2.out, c.a31, g_a31, p, g, "bott.conv1");
  auto g_e2 = nn::maxpool_backward(c.pool2.argmax, g_p2);
  detail::add_into(g_e2, g_e2_skip);

  auto g_a21 = detail::conv_relu_backward(c.a21, c.e2, g_e2, p, g, "enc2.conv2");
  auto g_p1 = detail::conv_relu_backward(c.pool1.out, c.a21, g_a21, p, g, "enc2.conv1");
  auto g_e1 = nn::maxpool_backward(c.pool1.argmax, g_p1);
  detail::add_into(g_e1, g_e1_skip);

  auto g_a11 = detail::conv_relu_backward(c.a11, c.e1, g_e1, p, g, "enc1.conv2");
  detail::conv_relu_backward(c.x, c.a11, g_a11, p, g, "enc1.conv1");
  return g;
}

}  // namespace vf
