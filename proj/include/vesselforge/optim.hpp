#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "vesselforge/error.hpp"
#include "vesselforge/params.hpp"

namespace vf {

struct AdamState {
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  ParamSet<float> m;
  ParamSet<float> v;

  static AdamState for_params(const ParamSet<float>& params) {
    AdamState s;
    s.m = params.zeros_like();
    s.v = params.zeros_like();
    return s;
  }

  bool operator==(const AdamState&) const = default;
};

/// Bias-corrected ADAM update applied in place:
///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2,
///   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps).
inline void adam_step(ParamSet<float>& params, const ParamSet<float>& grads, AdamState& state, double lr) {
  require(lr > 0.0, Errc::InvalidArgument, "learning rate must be positive");
  require(params.same_layout(grads), Errc::ShapeMismatch, "gradient layout differs from parameters");
  if (state.m.size() == 0 && state.step == 0) state = AdamState::for_params(params);
  require(params.same_layout(state.m) && params.same_layout(state.v), Errc::ShapeMismatch,
          "optimizer state layout differs from parameters");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const float b1 = static_cast<float>(state.beta1), b2 = static_cast<float>(state.beta2);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& theta = params[k].value;
    const auto& g = grads[k].value;
    auto& m = state.m[k].value;
    auto& v = state.v[k].value;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = b1 * m[i] + (1.0f - b1) * g[i];
      v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      theta[i] = static_cast<float>(theta[i] - lr * mhat / (std::sqrt(vhat) + state.epsilon));
    }
  }
}

struct LrSchedule {
  double initial_lr = 0.001;
  double decay = 0.9;
  int period = 20;

  void validate() const {
    require(initial_lr > 0.0, Errc::InvalidArgument, "initial_lr must be positive");
    require(decay > 0.0 && decay <= 1.0, Errc::InvalidArgument, "decay must be in (0, 1]");
    require(period >= 1, Errc::InvalidArgument, "decay period must be >= 1 epoch");
  }
};

/// Step decay: initial_lr * decay^floor(epoch / period).
inline double lr_at(const LrSchedule& s, int epoch) {
  require(epoch >= 0, Errc::InvalidArgument, "epoch must be >= 0");
  return s.initial_lr * std::pow(s.decay, epoch / s.period);
}

/// Optimizer state as named entries (adam.step, adam.m.<name>, adam.v.<name>)
/// for appending to a weight file.
inline ParamSet<float> adam_entries(const AdamState& s) {
  ParamSet<float> out;
  // Split into two exactly representable halves so counts beyond 2^24 survive f32.
  Tensor<float> step(2, 1, 1, 1);
  step[0] = static_cast<float>(s.step >> 20);
  step[1] = static_cast<float>(s.step & 0xFFFFF);
  out.add("adam.step", std::move(step));
  for (const auto& e : s.m) out.add("adam.m." + e.name, e.value);
  for (const auto& e : s.v) out.add("adam.v." + e.name, e.value);
  return out;
}

inline AdamState adam_from_entries(const ParamSet<float>& extras, const ParamSet<float>& params) {
  AdamState s = AdamState::for_params(params);
  const auto* step = extras.find("adam.step");
  require(step != nullptr && step->size() == 2, Errc::ParseError, "weight file has no optimizer state");
  s.step = (static_cast<std::uint64_t>((*step)[0]) << 20) + static_cast<std::uint64_t>((*step)[1]);
  for (std::size_t k = 0; k < params.size(); ++k) {
    s.m[k].value = extras.get("adam.m." + params[k].name);
    s.v[k].value = extras.get("adam.v." + params[k].name);
  }
  require(params.same_layout(s.m) && params.same_layout(s.v), Errc::ShapeMismatch,
          "stored optimizer moments do not match the model");
  return s;
}

}  // namespace vf
