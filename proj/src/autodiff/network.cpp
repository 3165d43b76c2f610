#include "instanton/autodiff/network.hpp"

#include <cmath>
#include <random>
#include <utility>

namespace instanton::ad {

std::string to_string(Activation) { return "tanh"; }

std::string to_string(OutputTransform t) {
  switch (t) {
    case OutputTransform::identity: return "identity";
    case OutputTransform::exp: return "exp";
    case OutputTransform::clamped_exp: return "clamped_exp";
  }
  return "identity";
}

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  throw ConfigError("activation", "unknown activation '" + s + "'");
}

OutputTransform output_transform_from_string(const std::string& s) {
  if (s == "identity") return OutputTransform::identity;
  if (s == "exp") return OutputTransform::exp;
  if (s == "clamped_exp") return OutputTransform::clamped_exp;
  throw ConfigError("output_transform", "unknown output transform '" + s + "'");
}

FeedForwardNet::FeedForwardNet(std::vector<int> layer_sizes, OutputTransform transform, Activation activation)
    : sizes_(std::move(layer_sizes)), activation_(activation), transform_(transform) {
  if (sizes_.size() < 2) throw ConfigError("layer_sizes", "need at least an input and an output size");
  for (int n : sizes_) {
    if (n <= 0) throw ConfigError("layer_sizes", "layer sizes must be positive");
  }
  for (std::size_t j = 1; j < sizes_.size(); ++j) {
    weights_.push_back(Matrix::Zero(sizes_[j], sizes_[j - 1]));
    biases_.push_back(Vector::Zero(sizes_[j]));
  }
}

FeedForwardNet FeedForwardNet::init_truncated_normal(std::vector<int> layer_sizes, std::uint64_t seed,
                                                     OutputTransform transform) {
  FeedForwardNet net(std::move(layer_sizes), transform);
  std::mt19937_64 rng(seed);
  for (Matrix& w : net.weights_) {
    const double sd = 1.0 / std::sqrt(static_cast<double>(w.cols()));
    std::normal_distribution<double> normal(0.0, sd);
    // Row-major fill so the parameter vector order matches the draw order.
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        double v = normal(rng);
        while (std::abs(v) > 2.0 * sd) v = normal(rng);
        w(r, c) = v;
      }
    }
  }
  return net;
}

std::size_t FeedForwardNet::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t j = 0; j < weights_.size(); ++j) {
    n += static_cast<std::size_t>(weights_[j].size() + biases_[j].size());
  }
  return n;
}

Vector FeedForwardNet::parameters() const {
  Vector flat(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index k = 0;
  for (std::size_t j = 0; j < weights_.size(); ++j) {
    const Matrix& w = weights_[j];
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) flat(k++) = w(r, c);
    }
    flat.segment(k, biases_[j].size()) = biases_[j];
    k += biases_[j].size();
  }
  return flat;
}

void FeedForwardNet::set_parameters(const Vector& flat) {
  if (static_cast<std::size_t>(flat.size()) != parameter_count()) {
    throw ShapeError("parameter vector has " + std::to_string(flat.size()) + " entries, network needs " +
                     std::to_string(parameter_count()));
  }
  Eigen::Index k = 0;
  for (std::size_t j = 0; j < weights_.size(); ++j) {
    Matrix& w = weights_[j];
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = flat(k++);
    }
    biases_[j] = flat.segment(k, biases_[j].size());
    k += biases_[j].size();
  }
}

Matrix FeedForwardNet::logits(const Matrix& inputs) const {
  if (inputs.rows() != input_dim()) {
    throw ShapeError("network expects " + std::to_string(input_dim()) + " inputs, got " +
                     std::to_string(inputs.rows()));
  }
  Matrix h = (weights_[0] * inputs).colwise() + biases_[0];
  for (std::size_t j = 1; j < weights_.size(); ++j) {
    h = (weights_[j] * tanh_values(h)).colwise() + biases_[j];
  }
  return h;
}

Matrix FeedForwardNet::forward(const Matrix& inputs) const {
  Matrix z = logits(inputs);
  switch (transform_) {
    case OutputTransform::identity: return z;
    case OutputTransform::exp: return z.array().exp().matrix();
    case OutputTransform::clamped_exp: return z.cwiseMax(-kLogitClamp).cwiseMin(kLogitClamp).array().exp().matrix();
  }
  return z;
}

NetBinding bind(Tape& tape, const FeedForwardNet& net) {
  NetBinding b;
  b.net = &net;
  for (std::size_t j = 0; j < net.layer_count(); ++j) {
    b.weights.push_back(tape.variable(net.weight(j)));
    b.biases.push_back(tape.variable(net.bias(j)));
  }
  return b;
}

void refresh(Tape& tape, const NetBinding& binding) {
  for (std::size_t j = 0; j < binding.weights.size(); ++j) {
    tape.set_value(binding.weights[j], binding.net->weight(j));
    tape.set_value(binding.biases[j], binding.net->bias(j));
  }
}

Vector gather_gradient(const Tape& tape, const NetBinding& binding) {
  Vector flat(static_cast<Eigen::Index>(binding.net->parameter_count()));
  Eigen::Index k = 0;
  for (std::size_t j = 0; j < binding.weights.size(); ++j) {
    const Matrix gw = tape.adjoint(binding.weights[j]);
    for (Eigen::Index r = 0; r < gw.rows(); ++r) {
      for (Eigen::Index c = 0; c < gw.cols(); ++c) flat(k++) = gw(r, c);
    }
    const Matrix gb = tape.adjoint(binding.biases[j]);
    flat.segment(k, gb.size()) = gb.col(0);
    k += gb.size();
  }
  return flat;
}

Var logits(const NetBinding& binding, Var inputs) {
  if (inputs.rows() != binding.net->input_dim()) throw ShapeError("network input dimension mismatch");
  Var h = affine(binding.weights[0], inputs, binding.biases[0]);
  for (std::size_t j = 1; j < binding.weights.size(); ++j) {
    h = affine(binding.weights[j], tanh(h), binding.biases[j]);
  }
  return h;
}

namespace {

Var apply_transform(OutputTransform t, Var z) {
  switch (t) {
    case OutputTransform::identity: return z;
    case OutputTransform::exp: return exp(z);
    case OutputTransform::clamped_exp: return exp(clamp(z, -kLogitClamp, kLogitClamp));
  }
  return z;
}

}  // namespace

Var forward(const NetBinding& binding, Var inputs) {
  return apply_transform(binding.net->output_transform(), logits(binding, inputs));
}

Tangent forward_with_tangent(const NetBinding& binding, Var inputs, Var input_tangent) {
  if (inputs.rows() != binding.net->input_dim()) throw ShapeError("network input dimension mismatch");
  if (input_tangent.rows() != inputs.rows() || input_tangent.cols() != inputs.cols()) {
    throw ShapeError("input tangent shape mismatch");
  }
  Var h = affine(binding.weights[0], inputs, binding.biases[0]);
  Var dh = matmul(binding.weights[0], input_tangent);
  for (std::size_t j = 1; j < binding.weights.size(); ++j) {
    Var a = tanh(h);
    Var da = (1.0 - square(a)) * dh;
    h = affine(binding.weights[j], a, binding.biases[j]);
    dh = matmul(binding.weights[j], da);
  }
  switch (binding.net->output_transform()) {
    case OutputTransform::identity: return {h, dh};
    case OutputTransform::exp: {
      Var y = exp(h);
      return {y, y * dh};
    }
    case OutputTransform::clamped_exp: {
      Var y = exp(clamp(h, -kLogitClamp, kLogitClamp));
      return {y, y * (inside_mask(h, -kLogitClamp, kLogitClamp) * dh)};
    }
  }
  return {h, dh};
}

}  // namespace instanton::ad
