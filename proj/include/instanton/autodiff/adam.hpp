#pragma once

#include <cstdint>

#include "instanton/autodiff/tape.hpp"

namespace instanton::ad {

struct AdamSettings {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam (Kingma & Ba, Algorithm 1).
struct AdamState {
  Vector first_moment;
  Vector second_moment;
  std::int64_t step_count = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  AdamState(Eigen::Index parameter_count, const AdamSettings& settings);
};

void adam_step(Eigen::Ref<Vector> params, const Eigen::Ref<const Vector>& grads, AdamState& state);

}  // namespace instanton::ad
