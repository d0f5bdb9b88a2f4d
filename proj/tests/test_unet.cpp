#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include <unistd.h>

#include "test_util.hpp"
#include "vesselforge/unet.hpp"
#include "vesselforge/weights_io.hpp"

using namespace vf;
using vf::testing::random_tensor;
namespace fs = std::filesystem;

namespace {

ModelSpec spec_with(int base) {
  ModelSpec s;
  s.base_channels = base;
  return s;
}

// Per-layer hand count: 3x3 convs, two 2x2 up-convolutions, 1x1 head.
std::size_t hand_count(std::size_t c) {
  auto conv = [](std::size_t cin, std::size_t cout) { return cin * cout * 9 + cout; };
  auto up = [](std::size_t cin, std::size_t cout) { return cin * cout * 4 + cout; };
  return conv(1, c) + conv(c, c) + conv(c, 2 * c) + conv(2 * c, 2 * c) + conv(2 * c, 4 * c) + conv(4 * c, 4 * c) +
         up(4 * c, 2 * c) + conv(4 * c, 2 * c) + conv(2 * c, 2 * c) + up(2 * c, c) + conv(2 * c, c) + conv(c, c) +
         (c + 1);
}

}  // namespace

TEST(ParamCount, MatchesHandSummation) {
  EXPECT_EQ(param_count(spec_with(32)), 465953u);
  EXPECT_EQ(hand_count(32), 465953u);
  for (int c : {1, 2, 4, 8, 16, 64}) EXPECT_EQ(param_count(spec_with(c)), hand_count(c)) << c;
  EXPECT_EQ(param_count(spec_with(1)), 488u);
  EXPECT_LT(param_count(ModelSpec{}), 31000000u);
}

TEST(ParamCount, AgreesWithInitializedTensors) {
  for (int c : {1, 3, 32}) EXPECT_EQ(init_params<float>(spec_with(c), 1).element_count(), param_count(spec_with(c)));
}

TEST(Spec, RejectsOtherDepths) {
  ModelSpec s;
  s.depth = 4;
  EXPECT_THROW(s.validate(), Error);
  EXPECT_THROW(param_count(s), Error);
}

TEST(Init, HeStandardDeviation) {
  const auto p = init_params<double>(ModelSpec{}, 42);
  const auto& w = p.get("bott.conv1.weight");
  ASSERT_EQ(w.size(), 128u * 64 * 9);
  double sum = 0, sq = 0;
  for (double v : w.vec()) {
    sum += v;
    sq += v * v;
  }
  const double mean = sum / w.size();
  const double sd = std::sqrt(sq / w.size() - mean * mean);
  EXPECT_NEAR(sd, std::sqrt(2.0 / 576.0), 0.05 * std::sqrt(2.0 / 576.0));
  EXPECT_NEAR(std::sqrt(2.0 / 9.0), 0.4714, 1e-4);
  for (const auto& e : p)
    if (e.name.ends_with(".bias"))
      for (double v : e.value.vec()) EXPECT_EQ(v, 0.0);
}

TEST(Init, DeterministicPerSeed) {
  EXPECT_EQ(init_params<float>(ModelSpec{}, 7), init_params<float>(ModelSpec{}, 7));
  EXPECT_NE(init_params<float>(ModelSpec{}, 7), init_params<float>(ModelSpec{}, 8));
}

TEST(Forward, LevelSizesFor48) {
  std::mt19937_64 rng(1);
  const auto p = init_params<float>(spec_with(4), 1);
  auto r = model_forward(random_tensor<float>({2, 1, 48, 48}, rng, 0, 1), p);
  EXPECT_EQ(r.cache.e1.shape(), (Shape{2, 4, 48, 48}));
  EXPECT_EQ(r.cache.pool1.out.shape(), (Shape{2, 4, 24, 24}));
  EXPECT_EQ(r.cache.pool2.out.shape(), (Shape{2, 8, 12, 12}));
  EXPECT_EQ(r.cache.b.shape(), (Shape{2, 16, 12, 12}));
  EXPECT_EQ(r.cache.cat2.shape(), (Shape{2, 16, 24, 24}));
  EXPECT_EQ(r.cache.cat1.shape(), (Shape{2, 8, 48, 48}));
  EXPECT_EQ(r.probs.shape(), (Shape{2, 1, 48, 48}));
}

TEST(Forward, ZeroWeightsGiveHalf) {
  auto p = init_params<float>(spec_with(4), 1);
  for (auto& e : p) e.value.fill(0.0f);
  const auto r = model_forward(Tensor<float>(1, 1, 16, 16, 0.3f), p);
  for (float v : r.probs.vec()) EXPECT_EQ(v, 0.5f);
}

TEST(Forward, SizeAgnosticModFour) {
  std::mt19937_64 rng(2);
  const auto p = init_params<float>(spec_with(2), 3);
  for (std::size_t s : {48u, 64u, 96u, 20u}) {
    const auto r = model_forward(random_tensor<float>({1, 1, s, s}, rng, 0, 1), p);
    EXPECT_EQ(r.probs.shape(), (Shape{1, 1, s, s}));
    for (float v : r.probs.vec()) {
      ASSERT_GT(v, 0.0f);
      ASSERT_LT(v, 1.0f);
    }
  }
  EXPECT_THROW(model_forward(Tensor<float>(1, 1, 50, 48), p), Error);
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  std::mt19937_64 rng(3);
  const auto p = init_params<float>(spec_with(2), 3);
  auto r = model_forward(random_tensor<float>({1, 1, 8, 8}, rng), p);
  const auto g = model_backward(r.cache, Tensor<float>(r.cache.logits.shape()));
  ASSERT_TRUE(g.same_layout(p));
  for (const auto& e : g)
    for (float v : e.value.vec()) ASSERT_EQ(v, 0.0f);
}

TEST(Backward, SecondCallOnSameCacheIsStale) {
  const auto p = init_params<float>(spec_with(2), 3);
  auto r = model_forward(Tensor<float>(1, 1, 8, 8, 0.5f), p);
  model_backward(r.cache, Tensor<float>(r.cache.logits.shape()));
  try {
    model_backward(r.cache, Tensor<float>(r.cache.logits.shape()));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::StaleCache);
  }
}

TEST(Backward, FullModelMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  auto p = init_params<double>(spec_with(4), 11);
  // Small non-zero biases so every bias gradient path is exercised.
  for (auto& e : p)
    if (e.name.ends_with(".bias"))
      for (auto& v : e.value.vec()) v = std::uniform_real_distribution<double>(-0.1, 0.1)(rng);
  const auto x = random_tensor<double>({1, 1, 8, 8}, rng, 0.0, 1.0);
  Tensor<double> y(x.shape());
  std::bernoulli_distribution coin(0.3);
  for (auto& v : y.vec()) v = coin(rng) ? 1.0 : 0.0;

  auto r = model_forward(x, p);
  const auto loss = nn::sigmoid_bce_loss(r.cache.logits, y);
  const auto grads = model_backward(r.cache, loss.grad);
  const auto objective = [&] { return nn::sigmoid_bce_loss(model_forward(x, p).cache.logits, y).loss; };

  double worst = 0.0;
  std::size_t checked = 0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    auto& t = p[k].value;
    const auto& g = grads[k].value;
    ASSERT_EQ(grads[k].name, p[k].name);
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (std::abs(g[i]) <= 1e-6) continue;
      const double num = vf::testing::central_difference(t[i], objective);
      worst = std::max(worst, vf::testing::relative_error(g[i], num));
      ++checked;
    }
  }
  EXPECT_GT(checked, 100u);
  EXPECT_LE(worst, 1e-3);
}

TEST(Forward, FloatAndDoublePathsAgree) {
  std::mt19937_64 rng(5);
  const auto pf = init_params<float>(spec_with(4), 5);
  const auto x = random_tensor<float>({2, 1, 16, 16}, rng, 0, 1);
  const auto a = model_forward(x, pf).probs;
  const auto b = model_forward(x.cast<double>(), pf.cast<double>()).probs;
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-5);
}

TEST(Forward, DeterministicBitIdentical) {
  std::mt19937_64 rng(6);
  const auto p = init_params<float>(spec_with(4), 5);
  const auto x = random_tensor<float>({3, 1, 16, 16}, rng, 0, 1);
  auto r1 = model_forward(x, p);
  auto r2 = model_forward(x, p);
  EXPECT_EQ(r1.probs, r2.probs);
  Tensor<float> go(r1.cache.logits.shape(), 0.01f);
  EXPECT_EQ(model_backward(r1.cache, go), model_backward(r2.cache, go));
}

TEST(WeightFile, RoundTripAndValidation) {
  const auto path = fs::temp_directory_path() / ("vf_w_" + std::to_string(::getpid()) + ".sunw");
  const auto p = init_params<float>(spec_with(4), 9);
  save_tensors(path, p);
  const auto m = load_model(path);
  EXPECT_EQ(m.spec.base_channels, 4);
  EXPECT_EQ(m.params, p);
  EXPECT_EQ(m.extras.size(), 0u);

  // Drop one tensor: loading must reject the layout.
  ParamSet<float> broken;
  for (const auto& e : p)
    if (e.name != "dec2.conv1.bias") broken.add(e.name, e.value);
  save_tensors(path, broken);
  try {
    load_model(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ShapeMismatch);
  }

  ParamSet<float> wrong = p;
  wrong.get("up1.weight") = Tensor<float>(8, 4, 3, 3);
  save_tensors(path, wrong);
  EXPECT_THROW(load_model(path), Error);
  fs::remove(path);
}

TEST(WeightFile, LayoutOnDisk) {
  ParamSet<float> p;
  Tensor<float> b(3, 1, 1, 1);
  b.vec() = {1.0f, -2.0f, 0.5f};
  p.add("x", b);
  const auto bytes = encode_tensors(p);
  // magic, version, count, name len, name, ndim, dims, payload
  ASSERT_EQ(bytes.size(), 4u + 4 + 4 + 2 + 1 + 1 + 4 + 12);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "SUNW");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[8], 1);
  EXPECT_EQ(bytes[12], 1);
  EXPECT_EQ(bytes[14], 'x');
  EXPECT_EQ(bytes[15], 1);
  EXPECT_EQ(bytes[16], 3);
  EXPECT_EQ(decode_tensors(bin::Reader(bytes, "mem")), p);

  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(decode_tensors(bin::Reader(truncated, "mem")), Error);
}
