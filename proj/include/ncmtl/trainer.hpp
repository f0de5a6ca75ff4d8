#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ncmtl/cluster_bank.hpp"
#include "ncmtl/datasets.hpp"
#include "ncmtl/model.hpp"
#include "ncmtl/optimizer.hpp"
#include "ncmtl/types.hpp"

namespace ncmtl {

/// cluster: per-batch k-means grouping with centroid replacement.
/// hard: every cluster layer acts as one shared layer for all tasks.
/// specific: per-task slots train independently, never equalised.
enum class Regime { cluster, hard, specific };

/// Whether cluster-layer slots follow the full objective gradient or the
/// classification term only.
enum class ClusterGrad { full, lp_only };

/// per_task: every batch carries batch_size examples of each task, so each
/// clustering step sees a full-batch gradient per task (the per-task loss
/// terms are summed the way the composed objective sums over tasks).
/// mixed: batches sample uniformly from the pooled multi-task training set.
/// round_robin: each batch holds examples of a single task, tasks cycling.
enum class Batching { per_task, mixed, round_robin };

std::string to_string(Regime r);
Regime regime_from_string(const std::string& s);
std::string to_string(ClusterGrad g);
ClusterGrad cluster_grad_from_string(const std::string& s);
std::string to_string(Batching b);
Batching batching_from_string(const std::string& s);

struct TrainConfig {
  int input_dim = 0;
  std::vector<int> trunk_dims = {16};
  std::vector<int> cluster_hidden_dims = {32, 32, 16};
  std::vector<int> cluster_counts = {3, 5, 10};
  int num_tasks = 0;
  int num_classes = 2;
  double alpha = 0.1;
  double learning_rate = 1e-5;
  OptimizerKind optimizer = OptimizerKind::adam;
  int batch_size = 32;
  int freeze_after_epochs = 4;  // negative: never freeze
  int epochs = 10;
  std::uint64_t seed = 1;
  Regime regime = Regime::cluster;
  ClusterGrad cluster_grad = ClusterGrad::full;
  Batching batching = Batching::per_task;
};

ModelSpec model_spec_from_config(const TrainConfig& config);

/// Throws ConfigError listing every invalid field.
void validate_config(const TrainConfig& config);

struct TrainState {
  ModelParams params;
  std::vector<ClusterState> cluster_states;  // one per cluster layer
  OptimizerState optimizer;
  int epoch = 0;
  long batch_counter = 0;
  Rng data_rng;
  Rng cluster_rng;
};

/// Builds the model, seeds the generators, and (cluster regime) performs the
/// initial clustering pass so slots equal their centroids before batch 0.
TrainState init_train_state(const TrainConfig& config);

struct BatchMetrics {
  double loss_total = 0.0;
  double loss_lp = 0.0;
  double loss_lc = 0.0;
  std::vector<int> task_correct;
  std::vector<int> task_count;
  std::vector<double> task_lp_sum;
};

/// L = L_p + alpha * L_c.
double total_loss(double lp, double lc, double alpha);

/// True once assignments must stay fixed (epoch >= freeze_after_epochs).
bool freeze_check(int epoch, const TrainConfig& config);

/// One step of the training loop: forward + loss, gradient update of trunk,
/// heads and cluster slots, then (cluster regime, unless frozen) per-layer
/// re-clustering and centroid replacement. Frozen layers keep their
/// assignments and only recompute centroids as within-group means.
BatchMetrics train_batch(const TaskBatch& batch, TrainState& state,
                         const TrainConfig& config);

struct MetricsRecord {
  int epoch = 0;
  int task_id = 0;
  std::string split;  // "train" or "test"
  std::optional<double> accuracy;
  double loss_lp = 0.0;
  double loss_lc = 0.0;
};

struct LayerDump {
  int layer = 0;
  int cluster_count = 0;
  std::vector<int> assignments;
  std::vector<double> centroid_norms;
  bool frozen = false;
};

struct EpochDump {
  int epoch = 0;
  std::vector<LayerDump> layers;
};

struct BatchLossLog {
  double total = 0.0;
  double lp = 0.0;
  double lc = 0.0;
};

struct TrainResult {
  ModelParams params;
  std::vector<ClusterState> cluster_states;
  std::vector<MetricsRecord> history;
  std::vector<EpochDump> dumps;
  std::vector<BatchLossLog> batch_losses;
  bool diverged = false;
  std::string divergence_reason;
};

/// Full training loop over epochs x batches. On divergence the partial
/// history is preserved and `diverged` is set instead of throwing.
TrainResult run_training(const TrainConfig& config,
                         const std::vector<TaskDataset>& train_sets,
                         const std::vector<TaskDataset>& test_sets);

struct AccuracyTable {
  std::vector<std::optional<double>> per_task;  // absent for empty test sets
  std::optional<double> average;                // macro average over present rows
};

AccuracyTable evaluate(const ModelParams& params,
                       const std::vector<ClusterState>& cluster_states,
                       const std::vector<TaskDataset>& test_sets);

/// Accuracy and mean cross-entropy of one task's dataset.
struct TaskEval {
  std::optional<double> accuracy;
  double mean_lp = 0.0;
};

TaskEval evaluate_task(const ModelParams& params, const TaskDataset& dataset);

/// Snapshot of the current cluster structure, one record per layer.
std::vector<LayerDump> dump_cluster_layers(const ModelParams& params,
                                           const std::vector<ClusterState>& states);

}  // namespace ncmtl
