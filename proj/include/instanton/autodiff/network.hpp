#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "instanton/autodiff/tape.hpp"

namespace instanton::ad {

enum class Activation { tanh };

enum class OutputTransform {
  identity,
  exp,
  /// exp of the pre-activation clamped to [-kLogitClamp, kLogitClamp].
  clamped_exp,
};

inline constexpr double kLogitClamp = 30.0;

std::string to_string(Activation a);
std::string to_string(OutputTransform t);
Activation activation_from_string(const std::string& s);
OutputTransform output_transform_from_string(const std::string& s);

/// Fully connected network: layer j maps n_{j-1} -> n_j by w^j act(.) + b^j,
/// with the activation skipped on the first layer's input. Inputs and outputs
/// are column-per-sample matrices.
class FeedForwardNet {
 public:
  FeedForwardNet() = default;
  /// All weights and biases zero.
  explicit FeedForwardNet(std::vector<int> layer_sizes, OutputTransform transform = OutputTransform::identity,
                          Activation activation = Activation::tanh);

  /// Weights ~ N(0, 1/fan_in) truncated at two standard deviations, zero biases.
  static FeedForwardNet init_truncated_normal(std::vector<int> layer_sizes, std::uint64_t seed,
                                              OutputTransform transform = OutputTransform::identity);

  const std::vector<int>& layer_sizes() const noexcept { return sizes_; }
  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  std::size_t layer_count() const noexcept { return weights_.size(); }
  Activation activation() const noexcept { return activation_; }
  OutputTransform output_transform() const noexcept { return transform_; }

  Matrix& weight(std::size_t layer) { return weights_.at(layer); }
  const Matrix& weight(std::size_t layer) const { return weights_.at(layer); }
  Vector& bias(std::size_t layer) { return biases_.at(layer); }
  const Vector& bias(std::size_t layer) const { return biases_.at(layer); }

  std::size_t parameter_count() const;
  /// Layer by layer: weights row-major, then the bias.
  Vector parameters() const;
  void set_parameters(const Vector& flat);

  /// Output before the output transform.
  Matrix logits(const Matrix& inputs) const;
  Matrix forward(const Matrix& inputs) const;

 private:
  std::vector<int> sizes_;
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
  Activation activation_ = Activation::tanh;
  OutputTransform transform_ = OutputTransform::identity;
};

/// Parameter leaves of a network registered on a tape.
struct NetBinding {
  const FeedForwardNet* net = nullptr;
  std::vector<Var> weights;
  std::vector<Var> biases;
};

NetBinding bind(Tape& tape, const FeedForwardNet& net);
/// Copies the network's current parameters into the bound leaves.
void refresh(Tape& tape, const NetBinding& binding);
/// Parameter adjoints in FeedForwardNet::parameters() order.
Vector gather_gradient(const Tape& tape, const NetBinding& binding);

Var logits(const NetBinding& binding, Var inputs);
Var forward(const NetBinding& binding, Var inputs);

struct Tangent {
  Var value;
  /// Directional derivative of the output along the input tangent.
  Var derivative;
};

/// Pushes an input tangent through the network alongside the values, so the
/// derivative itself is a tape node that can be differentiated again with
/// respect to the parameters.
Tangent forward_with_tangent(const NetBinding& binding, Var inputs, Var input_tangent);

}  // namespace instanton::ad
