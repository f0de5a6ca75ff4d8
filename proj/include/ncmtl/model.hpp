#pragma once

#include <string>
#include <vector>

#include "ncmtl/cluster_bank.hpp"
#include "ncmtl/dense_layer.hpp"
#include "ncmtl/errors.hpp"
#include "ncmtl/types.hpp"

namespace ncmtl {

/// Architecture description: a shared trunk, L cluster layers with per-task
/// slots, and one softmax head per task.
struct ModelSpec {
  int input_dim = 0;
  std::vector<int> trunk_dims;
  std::vector<int> cluster_hidden_dims;
  std::vector<int> cluster_counts;
  int num_tasks = 0;
  int num_classes = 2;
  Activation hidden_activation = Activation::tanh;
};

struct ModelParams {
  std::vector<DenseLayer> trunk;
  std::vector<ClusterLayerBank> cluster_layers;
  std::vector<DenseLayer> heads;  // one per task, softmax over classes

  int num_tasks() const { return static_cast<int>(heads.size()); }
  Eigen::Index input_dim() const;
};

/// Builds and initialises a model. Trunk and head weights are independent
/// uniform draws; within each cluster layer all N slots start from one
/// shared draw. Biases start at zero.
ModelParams build_model(const ModelSpec& spec, Rng& rng);

/// Checks dimension chaining, slot shape agreement, K ranges, and that
/// softmax appears only on heads. Throws ConfigError on violation.
void validate_model(const ModelParams& params);

struct Example {
  Vector features;
  int label = 0;
  int task_id = 0;
};

struct TaskBatch {
  std::vector<Example> examples;
  std::size_t size() const { return examples.size(); }
};

/// Full forward pass for one example through trunk, task j's slot in every
/// cluster layer, and head j. Returns class probabilities summing to 1.
Vector model_forward(const Vector& x, int task_id, const ModelParams& params);

struct LayerTrace {
  Vector pre;   // affine output
  Vector post;  // activation output
};

struct ExampleTrace {
  Vector input;
  std::vector<LayerTrace> trunk;
  std::vector<LayerTrace> cluster;
  LayerTrace head;  // head.post holds the class probabilities
  int task_id = 0;
};

struct ForwardCache {
  std::vector<ExampleTrace> examples;
};

ForwardCache forward_batch(const TaskBatch& batch, const ModelParams& params);

Vector one_hot(int label, Eigen::Index num_classes);

/// Cross-entropy -sum(y * log(p)) averaged over the examples in the batch.
/// Probabilities are clamped to >= 1e-12 before the log.
double classification_loss(const std::vector<Vector>& probs,
                           const std::vector<Vector>& expected_one_hot);

/// Which terms of L = L_p + alpha * L_c a gradient or loss covers.
enum class LossTerms { lp_only, lc_only, full };

struct TensorGrad {
  Matrix weights;
  Vector bias;
};

/// Gradient (or moment) storage shaped exactly like a ModelParams.
struct GradientSet {
  std::vector<TensorGrad> trunk;
  std::vector<std::vector<TensorGrad>> slots;  // [layer][task]
  std::vector<TensorGrad> heads;
};

GradientSet zeros_like(const ModelParams& params);

/// dst += scale * src, elementwise over every tensor.
void add_scaled(GradientSet& dst, const GradientSet& src, double scale);

void scale_gradients(GradientSet& g, double scale);

double max_abs(const GradientSet& g);

/// Name of the first non-finite tensor ("trunk[0].weights" style), or empty.
std::string first_non_finite(const GradientSet& g);

/// Exact analytic gradients of the selected loss terms. The classification
/// part is the batch mean; the clustering part treats centroids as constants
/// and contributes alpha * 2 * (slot - centroid) to bank slots only.
GradientSet backward(const TaskBatch& batch, const ForwardCache& cache,
                     const ModelParams& params, LossTerms terms,
                     const std::vector<ClusterState>& states, double alpha);

/// Forward-only evaluation of the selected loss terms on a batch.
double batch_loss(const TaskBatch& batch, const ModelParams& params, LossTerms terms,
                  const std::vector<ClusterState>& states, double alpha);

/// Central-difference check of backward() over every parameter. Returns the
/// maximum discrepancy |analytic - numeric| / max(1, |analytic|, |numeric|).
double finite_diff_check(const ModelParams& params, const TaskBatch& batch,
                         double epsilon, LossTerms terms,
                         const std::vector<ClusterState>& states, double alpha);

}  // namespace ncmtl
