#pragma once

#include <string>

#include "ncmtl/errors.hpp"
#include "ncmtl/types.hpp"

namespace ncmtl {

enum class Activation { relu, tanh, identity, softmax };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

/// Applies the activation elementwise; softmax is computed with the usual
/// max-shift so any finite input yields probabilities summing to 1.
Vector activate(Activation a, const Vector& pre);

/// Derivative of the activation at pre-activation `pre` with value `post`.
/// Not defined for softmax (handled jointly with the cross-entropy loss).
Vector activation_derivative(Activation a, const Vector& pre, const Vector& post);

struct DenseLayer {
  Matrix weights;  // out_dim x in_dim
  Vector bias;     // out_dim
  Activation activation = Activation::identity;

  Eigen::Index in_dim() const { return weights.cols(); }
  Eigen::Index out_dim() const { return weights.rows(); }
};

inline Vector affine(const Matrix& weights, const Vector& bias, const Vector& x) {
  if (x.size() != weights.cols()) {
    throw ConfigError("affine: input dim " + std::to_string(x.size()) +
                      " does not match layer in_dim " + std::to_string(weights.cols()));
  }
  return weights * x + bias;
}

inline Vector layer_forward(const DenseLayer& layer, const Vector& x) {
  return activate(layer.activation, affine(layer.weights, layer.bias, x));
}

/// Glorot-style uniform fill in [-sqrt(6/(fan_in+fan_out)), +...]; biases zero.
void init_layer_weights(Matrix& weights, Vector& bias, Rng& rng);

}  // namespace ncmtl
