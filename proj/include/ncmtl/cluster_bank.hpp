#pragma once

#include <cstdint>
#include <vector>

#include "ncmtl/dense_layer.hpp"
#include "ncmtl/errors.hpp"
#include "ncmtl/types.hpp"

namespace ncmtl {

/// One task's private weights inside a cluster layer.
struct TaskSlot {
  Matrix weights;  // out_dim x in_dim
  Vector bias;     // out_dim
};

/// A cluster layer: N identically shaped per-task slots, grouped into at
/// most `cluster_count` clusters whenever the trainer re-clusters.
struct ClusterLayerBank {
  std::vector<TaskSlot> slots;  // one per task
  int cluster_count = 1;        // K for this layer
  Activation activation = Activation::tanh;

  Eigen::Index in_dim() const { return slots.empty() ? 0 : slots.front().weights.cols(); }
  Eigen::Index out_dim() const { return slots.empty() ? 0 : slots.front().weights.rows(); }
  int num_tasks() const { return static_cast<int>(slots.size()); }
  Eigen::Index slot_length() const {
    return slots.empty() ? 0 : slots.front().weights.size() + slots.front().bias.size();
  }
};

/// Cluster membership and centers for one bank.
struct ClusterState {
  std::vector<int> assignments;   // task -> cluster index in [0, K)
  std::vector<Vector> centroids;  // K flattened parameter vectors
  bool frozen = false;
};

/// Flattened view of one slot: weight rows in order, then the bias.
Vector flatten_slot(const Matrix& weights, const Vector& bias);
Vector flatten_slot(const ClusterLayerBank& bank, int task_id);

/// Inverse of flatten_slot; target shapes select the split point.
void unflatten_slot(const Vector& flat, Matrix& weights, Vector& bias);

/// Overwrites every slot with its assigned centroid.
void replace_with_centroids(ClusterLayerBank& bank, const ClusterState& state);

/// Sum of squared distances between each slot and its assigned centroid,
/// for one layer.
double clustering_loss_layer(const ClusterLayerBank& bank, const ClusterState& state);

/// Same, summed over all layers.
double clustering_loss(const std::vector<ClusterLayerBank>& banks,
                       const std::vector<ClusterState>& states);

struct ParameterCount {
  std::int64_t floats = 0;
  std::int64_t assignment_entries = 0;
};

/// Deployed storage keeps K centroids plus the assignment table; training
/// storage keeps all N full slots.
ParameterCount stored_parameter_count(const ClusterLayerBank& bank, bool deployed);

}  // namespace ncmtl
