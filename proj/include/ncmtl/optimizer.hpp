#pragma once

#include <string>

#include "ncmtl/model.hpp"

namespace ncmtl {

enum class OptimizerKind { sgd, adam };

std::string to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& s);

/// Per-parameter moment accumulators; unused (empty) for plain SGD.
struct OptimizerState {
  OptimizerKind kind = OptimizerKind::sgd;
  GradientSet first_moment;
  GradientSet second_moment;
  long step = 0;
};

OptimizerState make_optimizer_state(const ModelParams& params, OptimizerKind kind);

/// Applies one update in place. SGD: theta -= lr * g. Adam: bias-corrected
/// first/second moments with beta1=0.9, beta2=0.999, eps=1e-8.
/// Throws DivergedError (naming the tensor) if an update turns non-finite.
void optimizer_step(ModelParams& params, const GradientSet& grads,
                    OptimizerState& state, double learning_rate);

}  // namespace ncmtl
