#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "ncmtl/cluster_bank.hpp"
#include "ncmtl/kmeans.hpp"
#include "ncmtl/model.hpp"
#include "ncmtl/types.hpp"

namespace ncmtl::testing {

/// Small randomly shaped model with nonzero centroid offsets, for gradient
/// and loss checks.
struct RandomScenario {
  ModelParams params;
  std::vector<ClusterState> states;
  TaskBatch batch;
};

inline RandomScenario make_random_scenario(std::uint64_t seed, int max_dim = 8,
                                           int max_cluster_layers = 2) {
  Rng rng = make_rng(seed, 77);
  auto pick = [&rng](int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  };

  ModelSpec spec;
  spec.input_dim = pick(2, max_dim);
  spec.trunk_dims = {pick(2, max_dim)};
  const int num_cluster_layers = pick(1, max_cluster_layers);
  spec.num_tasks = pick(2, 4);
  for (int i = 0; i < num_cluster_layers; ++i) {
    spec.cluster_hidden_dims.push_back(pick(2, max_dim));
    spec.cluster_counts.push_back(pick(1, spec.num_tasks));
  }
  spec.num_classes = pick(2, 3);

  RandomScenario scenario;
  scenario.params = build_model(spec, rng);

  // Per-slot perturbation so slots differ and sit away from their centroids;
  // the clustering term then has a nonzero gradient.
  std::normal_distribution<double> noise(0.0, 0.3);
  for (ClusterLayerBank& bank : scenario.params.cluster_layers) {
    for (TaskSlot& slot : bank.slots) {
      for (Eigen::Index r = 0; r < slot.weights.rows(); ++r) {
        for (Eigen::Index c = 0; c < slot.weights.cols(); ++c) {
          slot.weights(r, c) += noise(rng);
        }
      }
      for (Eigen::Index i = 0; i < slot.bias.size(); ++i) slot.bias[i] += noise(rng);
    }
  }

  for (const ClusterLayerBank& bank : scenario.params.cluster_layers) {
    ClusterState state;
    for (int j = 0; j < bank.num_tasks(); ++j) {
      state.assignments.push_back(pick(0, bank.cluster_count - 1));
    }
    for (int k = 0; k < bank.cluster_count; ++k) {
      Vector centroid(bank.slot_length());
      for (Eigen::Index i = 0; i < centroid.size(); ++i) centroid[i] = noise(rng);
      state.centroids.push_back(std::move(centroid));
    }
    scenario.states.push_back(std::move(state));
  }

  const int batch_size = pick(4, 8);
  std::normal_distribution<double> feature(0.0, 1.0);
  for (int e = 0; e < batch_size; ++e) {
    Example ex;
    ex.features = Vector(spec.input_dim);
    for (int d = 0; d < spec.input_dim; ++d) ex.features[d] = feature(rng);
    ex.task_id = pick(0, spec.num_tasks - 1);
    ex.label = pick(0, spec.num_classes - 1);
    scenario.batch.examples.push_back(std::move(ex));
  }
  return scenario;
}

/// Independent triple-loop (layer, task, cluster) evaluation of the
/// clustering residual, written against plain indexed loops rather than the
/// library's flatten path.
inline double clustering_loss_triple_loop(const std::vector<ClusterLayerBank>& banks,
                                          const std::vector<ClusterState>& states) {
  double total = 0.0;
  for (std::size_t i = 0; i < banks.size(); ++i) {
    const ClusterLayerBank& bank = banks[i];
    const ClusterState& state = states[i];
    for (int j = 0; j < bank.num_tasks(); ++j) {
      for (std::size_t k = 0; k < state.centroids.size(); ++k) {
        if (state.assignments[static_cast<std::size_t>(j)] != static_cast<int>(k)) continue;
        const TaskSlot& slot = bank.slots[static_cast<std::size_t>(j)];
        const Vector& c = state.centroids[k];
        Eigen::Index pos = 0;
        for (Eigen::Index r = 0; r < slot.weights.rows(); ++r) {
          for (Eigen::Index col = 0; col < slot.weights.cols(); ++col) {
            const double d = slot.weights(r, col) - c[pos++];
            total += d * d;
          }
        }
        for (Eigen::Index b = 0; b < slot.bias.size(); ++b) {
          const double d = slot.bias[b] - c[pos++];
          total += d * d;
        }
      }
    }
  }
  return total;
}

/// Exhaustive search over all assignments of N points to exactly K non-empty
/// clusters; returns the minimum achievable within-cluster squared distance.
/// Exponential, for small N only.
inline double brute_force_min_inertia(const Matrix& points, int k) {
  const int n = static_cast<int>(points.rows());
  std::vector<int> assign(static_cast<std::size_t>(n), 0);
  double best = std::numeric_limits<double>::infinity();

  while (true) {
    bool all_used = true;
    std::vector<bool> used(static_cast<std::size_t>(k), false);
    for (int a : assign) used[static_cast<std::size_t>(a)] = true;
    for (bool u : used) all_used = all_used && u;

    if (all_used) {
      Matrix centers = Matrix::Zero(k, points.cols());
      std::vector<int> counts(static_cast<std::size_t>(k), 0);
      for (int p = 0; p < n; ++p) {
        centers.row(assign[static_cast<std::size_t>(p)]) += points.row(p);
        ++counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(p)])];
      }
      for (int c = 0; c < k; ++c) centers.row(c) /= counts[static_cast<std::size_t>(c)];
      double inertia = 0.0;
      for (int p = 0; p < n; ++p) {
        inertia += (points.row(p) - centers.row(assign[static_cast<std::size_t>(p)])).squaredNorm();
      }
      best = std::min(best, inertia);
    }

    int pos = n - 1;
    while (pos >= 0) {
      if (++assign[static_cast<std::size_t>(pos)] < k) break;
      assign[static_cast<std::size_t>(pos)] = 0;
      --pos;
    }
    if (pos < 0) break;
  }
  return best;
}

}  // namespace ncmtl::testing
