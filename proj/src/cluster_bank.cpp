#include "ncmtl/cluster_bank.hpp"

#include <string>

namespace ncmtl {

Vector flatten_slot(const Matrix& weights, const Vector& bias) {
  Vector flat(weights.size() + bias.size());
  Eigen::Index pos = 0;
  for (Eigen::Index r = 0; r < weights.rows(); ++r) {
    for (Eigen::Index c = 0; c < weights.cols(); ++c) {
      flat[pos++] = weights(r, c);
    }
  }
  flat.tail(bias.size()) = bias;
  return flat;
}

Vector flatten_slot(const ClusterLayerBank& bank, int task_id) {
  if (task_id < 0 || task_id >= bank.num_tasks()) {
    throw LookupError("flatten_slot: task id " + std::to_string(task_id) +
                      " out of range for " + std::to_string(bank.num_tasks()) + " tasks");
  }
  const TaskSlot& s = bank.slots[static_cast<std::size_t>(task_id)];
  return flatten_slot(s.weights, s.bias);
}

void unflatten_slot(const Vector& flat, Matrix& weights, Vector& bias) {
  if (flat.size() != weights.size() + bias.size()) {
    throw ShapeError("unflatten_slot: vector length " + std::to_string(flat.size()) +
                     " does not match slot length " +
                     std::to_string(weights.size() + bias.size()));
  }
  Eigen::Index pos = 0;
  for (Eigen::Index r = 0; r < weights.rows(); ++r) {
    for (Eigen::Index c = 0; c < weights.cols(); ++c) {
      weights(r, c) = flat[pos++];
    }
  }
  bias = flat.tail(bias.size());
}

void replace_with_centroids(ClusterLayerBank& bank, const ClusterState& state) {
  if (static_cast<int>(state.assignments.size()) != bank.num_tasks()) {
    throw ShapeError("replace_with_centroids: assignment table covers " +
                     std::to_string(state.assignments.size()) + " tasks, bank has " +
                     std::to_string(bank.num_tasks()));
  }
  for (int j = 0; j < bank.num_tasks(); ++j) {
    const int k = state.assignments[static_cast<std::size_t>(j)];
    if (k < 0 || k >= static_cast<int>(state.centroids.size())) {
      throw LookupError("replace_with_centroids: task " + std::to_string(j) +
                        " assigned to unknown cluster " + std::to_string(k));
    }
    const Vector& c = state.centroids[static_cast<std::size_t>(k)];
    if (c.size() != bank.slot_length()) {
      throw ShapeError("replace_with_centroids: centroid length " +
                       std::to_string(c.size()) + " does not match slot length " +
                       std::to_string(bank.slot_length()));
    }
    TaskSlot& slot = bank.slots[static_cast<std::size_t>(j)];
    unflatten_slot(c, slot.weights, slot.bias);
  }
}

double clustering_loss_layer(const ClusterLayerBank& bank, const ClusterState& state) {
  if (static_cast<int>(state.assignments.size()) != bank.num_tasks()) {
    throw ShapeError("clustering_loss_layer: assignments/tasks mismatch");
  }
  double loss = 0.0;
  for (int j = 0; j < bank.num_tasks(); ++j) {
    const int k = state.assignments[static_cast<std::size_t>(j)];
    const Vector& c = state.centroids.at(static_cast<std::size_t>(k));
    loss += (flatten_slot(bank, j) - c).squaredNorm();
  }
  return loss;
}

double clustering_loss(const std::vector<ClusterLayerBank>& banks,
                       const std::vector<ClusterState>& states) {
  if (banks.size() != states.size()) {
    throw ShapeError("clustering_loss: banks/states count mismatch");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < banks.size(); ++i) {
    loss += clustering_loss_layer(banks[i], states[i]);
  }
  return loss;
}

ParameterCount stored_parameter_count(const ClusterLayerBank& bank, bool deployed) {
  ParameterCount count;
  const std::int64_t slot_len = static_cast<std::int64_t>(bank.slot_length());
  if (deployed) {
    count.floats = static_cast<std::int64_t>(bank.cluster_count) * slot_len;
    count.assignment_entries = bank.num_tasks();
  } else {
    count.floats = static_cast<std::int64_t>(bank.num_tasks()) * slot_len;
  }
  return count;
}

}  // namespace ncmtl
