#include "ncmtl/optimizer.hpp"

#include <cmath>

namespace ncmtl {

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEpsilon = 1e-8;

void sgd_update(Matrix& w, const Matrix& g, double lr) { w -= lr * g; }
void sgd_update(Vector& w, const Vector& g, double lr) { w -= lr * g; }

template <typename T>
void adam_update(T& w, const T& g, T& m, T& v, double lr, double corr1, double corr2) {
  m = kBeta1 * m + (1.0 - kBeta1) * g;
  v = kBeta2 * v + (1.0 - kBeta2) * g.array().square().matrix();
  w.array() -= lr * (m.array() / corr1) / ((v.array() / corr2).sqrt() + kEpsilon);
}

void check_finite(const Matrix& w, const Vector& b, const std::string& name) {
  if (!w.allFinite()) throw DivergedError("non-finite update in " + name + ".weights");
  if (!b.allFinite()) throw DivergedError("non-finite update in " + name + ".bias");
}

}  // namespace

std::string to_string(OptimizerKind k) {
  return k == OptimizerKind::sgd ? "sgd" : "adam";
}

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw ArgumentError("unknown optimizer: " + s);
}

OptimizerState make_optimizer_state(const ModelParams& params, OptimizerKind kind) {
  OptimizerState state;
  state.kind = kind;
  if (kind == OptimizerKind::adam) {
    state.first_moment = zeros_like(params);
    state.second_moment = zeros_like(params);
  }
  return state;
}

void optimizer_step(ModelParams& params, const GradientSet& grads,
                    OptimizerState& state, double learning_rate) {
  if (grads.trunk.size() != params.trunk.size() ||
      grads.slots.size() != params.cluster_layers.size() ||
      grads.heads.size() != params.heads.size()) {
    throw ShapeError("optimizer_step: gradient set not congruent with params");
  }

  if (state.kind == OptimizerKind::sgd) {
    for (std::size_t i = 0; i < params.trunk.size(); ++i) {
      sgd_update(params.trunk[i].weights, grads.trunk[i].weights, learning_rate);
      sgd_update(params.trunk[i].bias, grads.trunk[i].bias, learning_rate);
      check_finite(params.trunk[i].weights, params.trunk[i].bias,
                   "trunk[" + std::to_string(i) + "]");
    }
    for (std::size_t i = 0; i < params.cluster_layers.size(); ++i) {
      for (std::size_t j = 0; j < params.cluster_layers[i].slots.size(); ++j) {
        TaskSlot& slot = params.cluster_layers[i].slots[j];
        sgd_update(slot.weights, grads.slots[i][j].weights, learning_rate);
        sgd_update(slot.bias, grads.slots[i][j].bias, learning_rate);
        check_finite(slot.weights, slot.bias,
                     "cluster[" + std::to_string(i) + "].slot[" + std::to_string(j) + "]");
      }
    }
    for (std::size_t j = 0; j < params.heads.size(); ++j) {
      sgd_update(params.heads[j].weights, grads.heads[j].weights, learning_rate);
      sgd_update(params.heads[j].bias, grads.heads[j].bias, learning_rate);
      check_finite(params.heads[j].weights, params.heads[j].bias,
                   "head[" + std::to_string(j) + "]");
    }
    return;
  }

  ++state.step;
  const double corr1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.step));
  const double corr2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.step));

  for (std::size_t i = 0; i < params.trunk.size(); ++i) {
    adam_update(params.trunk[i].weights, grads.trunk[i].weights,
                state.first_moment.trunk[i].weights, state.second_moment.trunk[i].weights,
                learning_rate, corr1, corr2);
    adam_update(params.trunk[i].bias, grads.trunk[i].bias, state.first_moment.trunk[i].bias,
                state.second_moment.trunk[i].bias, learning_rate, corr1, corr2);
    check_finite(params.trunk[i].weights, params.trunk[i].bias,
                 "trunk[" + std::to_string(i) + "]");
  }
  for (std::size_t i = 0; i < params.cluster_layers.size(); ++i) {
    for (std::size_t j = 0; j < params.cluster_layers[i].slots.size(); ++j) {
      TaskSlot& slot = params.cluster_layers[i].slots[j];
      adam_update(slot.weights, grads.slots[i][j].weights, state.first_moment.slots[i][j].weights,
                  state.second_moment.slots[i][j].weights, learning_rate, corr1, corr2);
      adam_update(slot.bias, grads.slots[i][j].bias, state.first_moment.slots[i][j].bias,
                  state.second_moment.slots[i][j].bias, learning_rate, corr1, corr2);
      check_finite(slot.weights, slot.bias,
                   "cluster[" + std::to_string(i) + "].slot[" + std::to_string(j) + "]");
    }
  }
  for (std::size_t j = 0; j < params.heads.size(); ++j) {
    adam_update(params.heads[j].weights, grads.heads[j].weights,
                state.first_moment.heads[j].weights, state.second_moment.heads[j].weights,
                learning_rate, corr1, corr2);
    adam_update(params.heads[j].bias, grads.heads[j].bias, state.first_moment.heads[j].bias,
                state.second_moment.heads[j].bias, learning_rate, corr1, corr2);
    check_finite(params.heads[j].weights, params.heads[j].bias,
                 "head[" + std::to_string(j) + "]");
  }
}

}  // namespace ncmtl
