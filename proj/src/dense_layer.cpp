#include "ncmtl/dense_layer.hpp"

#include <cmath>

namespace ncmtl {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
    case Activation::softmax: return "softmax";
  }
  return "unknown";
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "identity") return Activation::identity;
  if (s == "softmax") return Activation::softmax;
  throw ArgumentError("unknown activation: " + s);
}

Vector activate(Activation a, const Vector& pre) {
  switch (a) {
    case Activation::relu:
      return pre.cwiseMax(0.0);
    case Activation::tanh:
      return pre.array().tanh();
    case Activation::identity:
      return pre;
    case Activation::softmax: {
      const double shift = pre.maxCoeff();
      Vector e = (pre.array() - shift).exp();
      return e / e.sum();
    }
  }
  throw ArgumentError("activate: unknown activation");
}

Vector activation_derivative(Activation a, const Vector& pre, const Vector& post) {
  switch (a) {
    case Activation::relu:
      return (pre.array() > 0.0).cast<double>();
    case Activation::tanh:
      return 1.0 - post.array().square();
    case Activation::identity:
      return Vector::Ones(pre.size());
    case Activation::softmax:
      throw ArgumentError("softmax derivative is fused with the loss");
  }
  throw ArgumentError("activation_derivative: unknown activation");
}

void init_layer_weights(Matrix& weights, Vector& bias, Rng& rng) {
  const double fan_in = static_cast<double>(weights.cols());
  const double fan_out = static_cast<double>(weights.rows());
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  // Row-major fill order so initialisation is reproducible independent of
  // Eigen's storage layout.
  for (Eigen::Index r = 0; r < weights.rows(); ++r) {
    for (Eigen::Index c = 0; c < weights.cols(); ++c) {
      weights(r, c) = dist(rng);
    }
  }
  bias.setZero();
}

}  // namespace ncmtl
