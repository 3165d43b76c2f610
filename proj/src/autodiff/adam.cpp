#include "instanton/autodiff/adam.hpp"

#include <cmath>
#include <string>

namespace instanton::ad {

AdamState::AdamState(Eigen::Index parameter_count, const AdamSettings& settings)
    : first_moment(Vector::Zero(parameter_count)),
      second_moment(Vector::Zero(parameter_count)),
      learning_rate(settings.learning_rate),
      beta1(settings.beta1),
      beta2(settings.beta2),
      epsilon(settings.epsilon) {
  if (!(settings.learning_rate > 0)) throw ConfigError("learning_rate", "must be positive");
  if (!(settings.beta1 >= 0 && settings.beta1 < 1)) throw ConfigError("beta1", "must lie in [0, 1)");
  if (!(settings.beta2 >= 0 && settings.beta2 < 1)) throw ConfigError("beta2", "must lie in [0, 1)");
  if (!(settings.epsilon > 0)) throw ConfigError("epsilon", "must be positive");
}

void adam_step(Eigen::Ref<Vector> params, const Eigen::Ref<const Vector>& grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
      params.size() != state.second_moment.size()) {
    throw ShapeError("adam_step: params (" + std::to_string(params.size()) + "), grads (" +
                     std::to_string(grads.size()) + ") and moments (" + std::to_string(state.first_moment.size()) +
                     ") differ in length");
  }
  // All-zero gradient: no update at all, momentum included.
  if ((grads.array() == 0.0).all()) return;
  ++state.step_count;
  const auto t = static_cast<double>(state.step_count);
  state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads;
  state.second_moment = state.beta2 * state.second_moment + (1.0 - state.beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  params.array() -= state.learning_rate * (state.first_moment.array() / c1) /
                    ((state.second_moment.array() / c2).sqrt() + state.epsilon);
}

}  // namespace instanton::ad
