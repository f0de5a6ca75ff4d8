#include "ncmtl/model.hpp"

#include <cmath>
#include <limits>

namespace ncmtl {

Eigen::Index ModelParams::input_dim() const {
  if (!trunk.empty()) return trunk.front().in_dim();
  if (!cluster_layers.empty()) return cluster_layers.front().in_dim();
  if (!heads.empty()) return heads.front().in_dim();
  return 0;
}

ModelParams build_model(const ModelSpec& spec, Rng& rng) {
  if (spec.input_dim < 1 || spec.num_tasks < 1 || spec.num_classes < 2) {
    throw ConfigError("build_model: input_dim, num_tasks and num_classes must be positive");
  }
  if (spec.cluster_counts.size() != spec.cluster_hidden_dims.size()) {
    throw ConfigError("build_model: cluster_counts and cluster_hidden_dims differ in length");
  }

  ModelParams params;
  int prev = spec.input_dim;

  for (int dim : spec.trunk_dims) {
    DenseLayer layer;
    layer.weights = Matrix(dim, prev);
    layer.bias = Vector(dim);
    layer.activation = spec.hidden_activation;
    init_layer_weights(layer.weights, layer.bias, rng);
    params.trunk.push_back(std::move(layer));
    prev = dim;
  }

  for (std::size_t i = 0; i < spec.cluster_hidden_dims.size(); ++i) {
    const int dim = spec.cluster_hidden_dims[i];
    const int k = spec.cluster_counts[i];
    if (k < 1 || k > spec.num_tasks) {
      throw ConfigError("build_model: cluster_counts[" + std::to_string(i) +
                        "]=" + std::to_string(k) + " outside [1, N]");
    }
    ClusterLayerBank bank;
    bank.cluster_count = k;
    bank.activation = spec.hidden_activation;
    TaskSlot shared;
    shared.weights = Matrix(dim, prev);
    shared.bias = Vector(dim);
    init_layer_weights(shared.weights, shared.bias, rng);
    bank.slots.assign(static_cast<std::size_t>(spec.num_tasks), shared);
    params.cluster_layers.push_back(std::move(bank));
    prev = dim;
  }

  // Heads start from one shared draw, like cluster-layer slots: task weights
  // must live in a common parameterization for weight-space distances to
  // measure task divergence rather than initialisation noise.
  DenseLayer shared_head;
  shared_head.weights = Matrix(spec.num_classes, prev);
  shared_head.bias = Vector(spec.num_classes);
  shared_head.activation = Activation::softmax;
  init_layer_weights(shared_head.weights, shared_head.bias, rng);
  params.heads.assign(static_cast<std::size_t>(spec.num_tasks), shared_head);

  validate_model(params);
  return params;
}

void validate_model(const ModelParams& params) {
  if (params.heads.empty()) {
    throw ConfigError("model: at least one task head is required");
  }
  const int n = params.num_tasks();
  Eigen::Index prev = params.input_dim();

  for (std::size_t i = 0; i < params.trunk.size(); ++i) {
    const DenseLayer& layer = params.trunk[i];
    if (layer.activation == Activation::softmax) {
      throw ConfigError("model: softmax is only valid on the final head layer");
    }
    if (layer.in_dim() != prev || layer.bias.size() != layer.out_dim()) {
      throw ConfigError("model: trunk layer " + std::to_string(i) + " has inconsistent dims");
    }
    prev = layer.out_dim();
  }

  for (std::size_t i = 0; i < params.cluster_layers.size(); ++i) {
    const ClusterLayerBank& bank = params.cluster_layers[i];
    if (bank.activation == Activation::softmax) {
      throw ConfigError("model: softmax is only valid on the final head layer");
    }
    if (bank.num_tasks() != n) {
      throw ConfigError("model: cluster layer " + std::to_string(i) +
                        " has " + std::to_string(bank.num_tasks()) + " slots for " +
                        std::to_string(n) + " tasks");
    }
    if (bank.cluster_count < 1 || bank.cluster_count > n) {
      throw ConfigError("model: cluster layer " + std::to_string(i) + " has K outside [1, N]");
    }
    for (const TaskSlot& slot : bank.slots) {
      if (slot.weights.rows() != bank.out_dim() || slot.weights.cols() != prev ||
          slot.bias.size() != bank.out_dim()) {
        throw ConfigError("model: cluster layer " + std::to_string(i) +
                          " has slots of differing shape");
      }
    }
    prev = bank.out_dim();
  }

  for (std::size_t j = 0; j < params.heads.size(); ++j) {
    const DenseLayer& head = params.heads[j];
    if (head.activation != Activation::softmax) {
      throw ConfigError("model: head " + std::to_string(j) + " must end in softmax");
    }
    if (head.in_dim() != prev || head.bias.size() != head.out_dim()) {
      throw ConfigError("model: head " + std::to_string(j) + " has inconsistent dims");
    }
  }
}

Vector model_forward(const Vector& x, int task_id, const ModelParams& params) {
  if (task_id < 0 || task_id >= params.num_tasks()) {
    throw LookupError("model_forward: unknown task id " + std::to_string(task_id));
  }
  if (x.size() != params.input_dim()) {
    throw ConfigError("model_forward: input dim " + std::to_string(x.size()) +
                      " does not match model input dim " +
                      std::to_string(params.input_dim()));
  }
  Vector h = x;
  for (const DenseLayer& layer : params.trunk) {
    h = layer_forward(layer, h);
  }
  for (const ClusterLayerBank& bank : params.cluster_layers) {
    const TaskSlot& slot = bank.slots[static_cast<std::size_t>(task_id)];
    h = activate(bank.activation, affine(slot.weights, slot.bias, h));
  }
  return layer_forward(params.heads[static_cast<std::size_t>(task_id)], h);
}

ForwardCache forward_batch(const TaskBatch& batch, const ModelParams& params) {
  ForwardCache cache;
  cache.examples.reserve(batch.size());
  for (const Example& ex : batch.examples) {
    if (ex.task_id < 0 || ex.task_id >= params.num_tasks()) {
      throw LookupError("forward_batch: unknown task id " + std::to_string(ex.task_id));
    }
    ExampleTrace trace;
    trace.input = ex.features;
    trace.task_id = ex.task_id;
    Vector h = ex.features;
    for (const DenseLayer& layer : params.trunk) {
      LayerTrace t;
      t.pre = affine(layer.weights, layer.bias, h);
      t.post = activate(layer.activation, t.pre);
      h = t.post;
      trace.trunk.push_back(std::move(t));
    }
    for (const ClusterLayerBank& bank : params.cluster_layers) {
      const TaskSlot& slot = bank.slots[static_cast<std::size_t>(ex.task_id)];
      LayerTrace t;
      t.pre = affine(slot.weights, slot.bias, h);
      t.post = activate(bank.activation, t.pre);
      h = t.post;
      trace.cluster.push_back(std::move(t));
    }
    const DenseLayer& head = params.heads[static_cast<std::size_t>(ex.task_id)];
    trace.head.pre = affine(head.weights, head.bias, h);
    trace.head.post = activate(head.activation, trace.head.pre);
    cache.examples.push_back(std::move(trace));
  }
  return cache;
}

Vector one_hot(int label, Eigen::Index num_classes) {
  if (label < 0 || label >= num_classes) {
    throw ArgumentError("one_hot: label " + std::to_string(label) + " outside [0, " +
                        std::to_string(num_classes) + ")");
  }
  Vector y = Vector::Zero(num_classes);
  y[label] = 1.0;
  return y;
}

double classification_loss(const std::vector<Vector>& probs,
                           const std::vector<Vector>& expected_one_hot) {
  if (probs.size() != expected_one_hot.size()) {
    throw ArgumentError("classification_loss: probs/labels count mismatch");
  }
  if (probs.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const Vector& p = probs[i];
    const Vector& y = expected_one_hot[i];
    if (p.size() != y.size()) {
      throw ArgumentError("classification_loss: example " + std::to_string(i) +
                          " has mismatched class counts");
    }
    for (Eigen::Index c = 0; c < p.size(); ++c) {
      const double clamped = std::max(p[c], 1e-12);
      if (!(clamped >= 0.0 && clamped <= 1.0)) {
        throw NumericError("classification_loss: probability " + std::to_string(p[c]) +
                           " outside [0, 1] after clamping");
      }
      if (y[c] != 0.0) total -= y[c] * std::log(clamped);
    }
  }
  return total / static_cast<double>(probs.size());
}

GradientSet zeros_like(const ModelParams& params) {
  GradientSet g;
  for (const DenseLayer& layer : params.trunk) {
    g.trunk.push_back({Matrix::Zero(layer.weights.rows(), layer.weights.cols()),
                       Vector::Zero(layer.bias.size())});
  }
  for (const ClusterLayerBank& bank : params.cluster_layers) {
    std::vector<TensorGrad> layer_slots;
    for (const TaskSlot& slot : bank.slots) {
      layer_slots.push_back({Matrix::Zero(slot.weights.rows(), slot.weights.cols()),
                             Vector::Zero(slot.bias.size())});
    }
    g.slots.push_back(std::move(layer_slots));
  }
  for (const DenseLayer& head : params.heads) {
    g.heads.push_back({Matrix::Zero(head.weights.rows(), head.weights.cols()),
                       Vector::Zero(head.bias.size())});
  }
  return g;
}

namespace {

template <typename Fn>
void for_each_grad(GradientSet& g, Fn&& fn) {
  for (std::size_t i = 0; i < g.trunk.size(); ++i) {
    fn(g.trunk[i], "trunk[" + std::to_string(i) + "]");
  }
  for (std::size_t i = 0; i < g.slots.size(); ++i) {
    for (std::size_t j = 0; j < g.slots[i].size(); ++j) {
      fn(g.slots[i][j], "cluster[" + std::to_string(i) + "].slot[" + std::to_string(j) + "]");
    }
  }
  for (std::size_t j = 0; j < g.heads.size(); ++j) {
    fn(g.heads[j], "head[" + std::to_string(j) + "]");
  }
}

template <typename Fn>
void for_each_grad(const GradientSet& g, Fn&& fn) {
  for_each_grad(const_cast<GradientSet&>(g),
                [&fn](TensorGrad& t, const std::string& name) {
                  fn(static_cast<const TensorGrad&>(t), name);
                });
}

}  // namespace

void add_scaled(GradientSet& dst, const GradientSet& src, double scale) {
  if (dst.trunk.size() != src.trunk.size() || dst.slots.size() != src.slots.size() ||
      dst.heads.size() != src.heads.size()) {
    throw ShapeError("add_scaled: gradient sets are not congruent");
  }
  for (std::size_t i = 0; i < dst.trunk.size(); ++i) {
    dst.trunk[i].weights += scale * src.trunk[i].weights;
    dst.trunk[i].bias += scale * src.trunk[i].bias;
  }
  for (std::size_t i = 0; i < dst.slots.size(); ++i) {
    for (std::size_t j = 0; j < dst.slots[i].size(); ++j) {
      dst.slots[i][j].weights += scale * src.slots[i][j].weights;
      dst.slots[i][j].bias += scale * src.slots[i][j].bias;
    }
  }
  for (std::size_t j = 0; j < dst.heads.size(); ++j) {
    dst.heads[j].weights += scale * src.heads[j].weights;
    dst.heads[j].bias += scale * src.heads[j].bias;
  }
}

void scale_gradients(GradientSet& g, double scale) {
  for_each_grad(g, [scale](TensorGrad& t, const std::string&) {
    t.weights *= scale;
    t.bias *= scale;
  });
}

double max_abs(const GradientSet& g) {
  double m = 0.0;
  for_each_grad(g, [&m](const TensorGrad& t, const std::string&) {
    if (t.weights.size() > 0) m = std::max(m, t.weights.cwiseAbs().maxCoeff());
    if (t.bias.size() > 0) m = std::max(m, t.bias.cwiseAbs().maxCoeff());
  });
  return m;
}

std::string first_non_finite(const GradientSet& g) {
  std::string found;
  for_each_grad(g, [&found](const TensorGrad& t, const std::string& name) {
    if (!found.empty()) return;
    if (!t.weights.allFinite()) {
      found = name + ".weights";
    } else if (!t.bias.allFinite()) {
      found = name + ".bias";
    }
  });
  return found;
}

GradientSet backward(const TaskBatch& batch, const ForwardCache& cache,
                     const ModelParams& params, LossTerms terms,
                     const std::vector<ClusterState>& states, double alpha) {
  if (cache.examples.size() != batch.size()) {
    throw StateError("backward: forward cache missing or stale for this batch");
  }
  GradientSet grads = zeros_like(params);

  if (terms == LossTerms::lp_only || terms == LossTerms::full) {
    const Eigen::Index num_trunk = static_cast<Eigen::Index>(params.trunk.size());
    const Eigen::Index num_cluster = static_cast<Eigen::Index>(params.cluster_layers.size());
    for (std::size_t e = 0; e < batch.size(); ++e) {
      const Example& ex = batch.examples[e];
      const ExampleTrace& trace = cache.examples[e];
      const std::size_t task = static_cast<std::size_t>(ex.task_id);
      const DenseLayer& head = params.heads[task];

      // Softmax and cross-entropy differentiate jointly to p - y.
      Vector delta = trace.head.post - one_hot(ex.label, head.out_dim());

      const Vector& head_in = num_cluster > 0 ? trace.cluster.back().post
                              : num_trunk > 0 ? trace.trunk.back().post
                                              : trace.input;
      grads.heads[task].weights += delta * head_in.transpose();
      grads.heads[task].bias += delta;
      Vector back = head.weights.transpose() * delta;

      for (Eigen::Index i = num_cluster - 1; i >= 0; --i) {
        const ClusterLayerBank& bank = params.cluster_layers[static_cast<std::size_t>(i)];
        const LayerTrace& t = trace.cluster[static_cast<std::size_t>(i)];
        const Vector dz =
            back.cwiseProduct(activation_derivative(bank.activation, t.pre, t.post));
        const Vector& layer_in = i > 0    ? trace.cluster[static_cast<std::size_t>(i - 1)].post
                                 : num_trunk > 0 ? trace.trunk.back().post
                                                 : trace.input;
        TensorGrad& slot_grad = grads.slots[static_cast<std::size_t>(i)][task];
        slot_grad.weights += dz * layer_in.transpose();
        slot_grad.bias += dz;
        back = bank.slots[task].weights.transpose() * dz;
      }

      for (Eigen::Index i = num_trunk - 1; i >= 0; --i) {
        const DenseLayer& layer = params.trunk[static_cast<std::size_t>(i)];
        const LayerTrace& t = trace.trunk[static_cast<std::size_t>(i)];
        const Vector dz =
            back.cwiseProduct(activation_derivative(layer.activation, t.pre, t.post));
        const Vector& layer_in =
            i > 0 ? trace.trunk[static_cast<std::size_t>(i - 1)].post : trace.input;
        grads.trunk[static_cast<std::size_t>(i)].weights += dz * layer_in.transpose();
        grads.trunk[static_cast<std::size_t>(i)].bias += dz;
        back = layer.weights.transpose() * dz;
      }
    }
    scale_gradients(grads, 1.0 / static_cast<double>(batch.size()));
  }

  if (terms == LossTerms::lc_only || terms == LossTerms::full) {
    if (states.size() != params.cluster_layers.size()) {
      throw ShapeError("backward: cluster states do not cover every cluster layer");
    }
    for (std::size_t i = 0; i < params.cluster_layers.size(); ++i) {
      const ClusterLayerBank& bank = params.cluster_layers[i];
      const ClusterState& state = states[i];
      for (int j = 0; j < bank.num_tasks(); ++j) {
        const int k = state.assignments.at(static_cast<std::size_t>(j));
        const Vector diff =
            flatten_slot(bank, j) - state.centroids.at(static_cast<std::size_t>(k));
        TensorGrad& slot_grad = grads.slots[i][static_cast<std::size_t>(j)];
        Matrix dw(slot_grad.weights.rows(), slot_grad.weights.cols());
        Vector db(slot_grad.bias.size());
        unflatten_slot(diff, dw, db);
        slot_grad.weights += (2.0 * alpha) * dw;
        slot_grad.bias += (2.0 * alpha) * db;
      }
    }
  }

  return grads;
}

double batch_loss(const TaskBatch& batch, const ModelParams& params, LossTerms terms,
                  const std::vector<ClusterState>& states, double alpha) {
  double loss = 0.0;
  if (terms == LossTerms::lp_only || terms == LossTerms::full) {
    std::vector<Vector> probs;
    std::vector<Vector> labels;
    probs.reserve(batch.size());
    labels.reserve(batch.size());
    for (const Example& ex : batch.examples) {
      probs.push_back(model_forward(ex.features, ex.task_id, params));
      labels.push_back(one_hot(ex.label, probs.back().size()));
    }
    loss += classification_loss(probs, labels);
  }
  if (terms == LossTerms::lc_only || terms == LossTerms::full) {
    loss += alpha * clustering_loss(params.cluster_layers, states);
  }
  return loss;
}

namespace {

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// Central difference over every entry of one tensor.
template <typename Tensor, typename GradTensor>
double check_tensor(Tensor& tensor, const GradTensor& analytic, double epsilon,
                    const TaskBatch& batch, const ModelParams& params, LossTerms terms,
                    const std::vector<ClusterState>& states, double alpha) {
  double worst = 0.0;
  double* data = tensor.data();
  const double* grad = analytic.data();
  for (Eigen::Index i = 0; i < tensor.size(); ++i) {
    const double original = data[i];
    data[i] = original + epsilon;
    const double plus = batch_loss(batch, params, terms, states, alpha);
    data[i] = original - epsilon;
    const double minus = batch_loss(batch, params, terms, states, alpha);
    data[i] = original;
    const double numeric = (plus - minus) / (2.0 * epsilon);
    worst = std::max(worst, relative_error(grad[i], numeric));
  }
  return worst;
}

}  // namespace

double finite_diff_check(const ModelParams& params, const TaskBatch& batch,
                         double epsilon, LossTerms terms,
                         const std::vector<ClusterState>& states, double alpha) {
  if (epsilon < 1e-7 || epsilon > 1e-3) {
    throw ArgumentError("finite_diff_check: epsilon outside [1e-7, 1e-3]");
  }
  ModelParams probe = params;  // perturbed copy; the caller's params stay intact
  const ForwardCache cache = forward_batch(batch, probe);
  const GradientSet analytic = backward(batch, cache, probe, terms, states, alpha);

  double worst = 0.0;
  for (std::size_t i = 0; i < probe.trunk.size(); ++i) {
    worst = std::max(worst, check_tensor(probe.trunk[i].weights, analytic.trunk[i].weights,
                                         epsilon, batch, probe, terms, states, alpha));
    worst = std::max(worst, check_tensor(probe.trunk[i].bias, analytic.trunk[i].bias,
                                         epsilon, batch, probe, terms, states, alpha));
  }
  for (std::size_t i = 0; i < probe.cluster_layers.size(); ++i) {
    for (std::size_t j = 0; j < probe.cluster_layers[i].slots.size(); ++j) {
      TaskSlot& slot = probe.cluster_layers[i].slots[j];
      worst = std::max(worst, check_tensor(slot.weights, analytic.slots[i][j].weights,
                                           epsilon, batch, probe, terms, states, alpha));
      worst = std::max(worst, check_tensor(slot.bias, analytic.slots[i][j].bias, epsilon,
                                           batch, probe, terms, states, alpha));
    }
  }
  for (std::size_t j = 0; j < probe.heads.size(); ++j) {
    worst = std::max(worst, check_tensor(probe.heads[j].weights, analytic.heads[j].weights,
                                         epsilon, batch, probe, terms, states, alpha));
    worst = std::max(worst, check_tensor(probe.heads[j].bias, analytic.heads[j].bias,
                                         epsilon, batch, probe, terms, states, alpha));
  }
  return worst;
}

}  // namespace ncmtl
