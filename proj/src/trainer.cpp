#include "ncmtl/trainer.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ncmtl/kmeans.hpp"

namespace ncmtl {

std::string to_string(Regime r) {
  switch (r) {
    case Regime::cluster: return "cluster";
    case Regime::hard: return "hard";
    case Regime::specific: return "specific";
  }
  return "unknown";
}

Regime regime_from_string(const std::string& s) {
  if (s == "cluster") return Regime::cluster;
  if (s == "hard") return Regime::hard;
  if (s == "specific") return Regime::specific;
  throw ArgumentError("unknown regime: " + s);
}

std::string to_string(ClusterGrad g) {
  return g == ClusterGrad::full ? "full" : "lp_only";
}

ClusterGrad cluster_grad_from_string(const std::string& s) {
  if (s == "full") return ClusterGrad::full;
  if (s == "lp_only") return ClusterGrad::lp_only;
  throw ArgumentError("unknown cluster_grad: " + s);
}

std::string to_string(Batching b) {
  switch (b) {
    case Batching::per_task: return "per_task";
    case Batching::mixed: return "mixed";
    case Batching::round_robin: return "round_robin";
  }
  return "unknown";
}

Batching batching_from_string(const std::string& s) {
  if (s == "per_task") return Batching::per_task;
  if (s == "mixed") return Batching::mixed;
  if (s == "round_robin") return Batching::round_robin;
  throw ArgumentError("unknown batching: " + s);
}

ModelSpec model_spec_from_config(const TrainConfig& config) {
  ModelSpec spec;
  spec.input_dim = config.input_dim;
  spec.trunk_dims = config.trunk_dims;
  spec.cluster_hidden_dims = config.cluster_hidden_dims;
  spec.num_tasks = config.num_tasks;
  spec.num_classes = config.num_classes;
  switch (config.regime) {
    case Regime::cluster:
      spec.cluster_counts = config.cluster_counts;
      break;
    case Regime::hard:
      // One shared slot group per layer.
      spec.cluster_counts.assign(config.cluster_hidden_dims.size(), 1);
      break;
    case Regime::specific:
      // Every task keeps its own weights.
      spec.cluster_counts.assign(config.cluster_hidden_dims.size(), config.num_tasks);
      break;
  }
  return spec;
}

void validate_config(const TrainConfig& config) {
  std::vector<std::string> problems;
  if (config.input_dim < 1) problems.push_back("input_dim must be >= 1");
  if (config.num_tasks < 1) problems.push_back("num_tasks must be >= 1");
  if (config.num_classes < 2) problems.push_back("num_classes must be >= 2");
  if (config.alpha < 0.0) problems.push_back("alpha must be >= 0");
  if (!(config.learning_rate > 0.0)) problems.push_back("learning_rate must be > 0");
  if (config.batch_size < 1) problems.push_back("batch_size must be >= 1");
  if (config.epochs < 1) problems.push_back("epochs must be >= 1");
  for (int dim : config.trunk_dims) {
    if (dim < 1) {
      problems.push_back("trunk_dims entries must be >= 1");
      break;
    }
  }
  for (int dim : config.cluster_hidden_dims) {
    if (dim < 1) {
      problems.push_back("cluster_hidden_dims entries must be >= 1");
      break;
    }
  }
  if (config.cluster_counts.size() != config.cluster_hidden_dims.size()) {
    problems.push_back("cluster_counts and cluster_hidden_dims must have equal length");
  }
  for (int k : config.cluster_counts) {
    if (k < 1 || k > config.num_tasks) {
      problems.push_back("cluster_counts entries must lie in [1, num_tasks]");
      break;
    }
  }
  if (!problems.empty()) {
    std::ostringstream msg;
    msg << "invalid config:";
    for (const std::string& p : problems) msg << "\n  - " << p;
    throw ConfigError(msg.str());
  }
}

namespace {

Matrix slot_points(const ClusterLayerBank& bank) {
  Matrix points(bank.num_tasks(), bank.slot_length());
  for (int j = 0; j < bank.num_tasks(); ++j) {
    points.row(j) = flatten_slot(bank, j).transpose();
  }
  return points;
}

void cluster_and_replace(ClusterLayerBank& bank, ClusterState& state, Rng& rng) {
  const Matrix points = slot_points(bank);
  const ClusteringResult result = cluster_tasks(points, bank.cluster_count, rng);
  state.assignments.assign(result.assignments.data(),
                           result.assignments.data() + result.assignments.size());
  state.centroids.clear();
  for (Eigen::Index k = 0; k < result.centers.rows(); ++k) {
    state.centroids.push_back(result.centers.row(k).transpose());
  }
  replace_with_centroids(bank, state);
}

// Keeps the frozen assignment table and refreshes centroids as the means of
// the slots inside each fixed group.
void recenter_within_assignments(ClusterLayerBank& bank, ClusterState& state) {
  const std::size_t k = state.centroids.size();
  std::vector<Vector> sums(k, Vector::Zero(bank.slot_length()));
  std::vector<int> counts(k, 0);
  for (int j = 0; j < bank.num_tasks(); ++j) {
    const std::size_t a = static_cast<std::size_t>(state.assignments[static_cast<std::size_t>(j)]);
    sums[a] += flatten_slot(bank, j);
    ++counts[a];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] > 0) state.centroids[c] = sums[c] / static_cast<double>(counts[c]);
  }
  replace_with_centroids(bank, state);
}

// Hard sharing: every slot receives the summed gradient of all tasks, which
// equals the gradient of one shared layer traversed by every example.
void tie_slot_gradients(GradientSet& grads) {
  for (std::vector<TensorGrad>& layer : grads.slots) {
    if (layer.empty()) continue;
    TensorGrad total = layer.front();
    for (std::size_t j = 1; j < layer.size(); ++j) {
      total.weights += layer[j].weights;
      total.bias += layer[j].bias;
    }
    for (TensorGrad& slot : layer) slot = total;
  }
}

// Mirrors slot values into the per-layer state for regimes that never run
// the clustering step, so dumps and checkpoints stay meaningful.
void sync_states_to_slots(const ModelParams& params, std::vector<ClusterState>& states,
                          Regime regime) {
  for (std::size_t i = 0; i < params.cluster_layers.size(); ++i) {
    const ClusterLayerBank& bank = params.cluster_layers[i];
    ClusterState& state = states[i];
    if (regime == Regime::hard) {
      state.centroids[0] = flatten_slot(bank, 0);
    } else {
      for (int j = 0; j < bank.num_tasks(); ++j) {
        state.centroids[static_cast<std::size_t>(j)] = flatten_slot(bank, j);
      }
    }
  }
}

}  // namespace

TrainState init_train_state(const TrainConfig& config) {
  validate_config(config);
  TrainState state;
  Rng init_rng = make_rng(config.seed, /*stream=*/1);
  state.data_rng = make_rng(config.seed, /*stream=*/2);
  state.cluster_rng = make_rng(config.seed, /*stream=*/3);
  state.params = build_model(model_spec_from_config(config), init_rng);
  state.optimizer = make_optimizer_state(state.params, config.optimizer);

  for (std::size_t i = 0; i < state.params.cluster_layers.size(); ++i) {
    ClusterLayerBank& bank = state.params.cluster_layers[i];
    ClusterState cs;
    switch (config.regime) {
      case Regime::cluster:
        cs.frozen = false;
        state.cluster_states.push_back(cs);
        cluster_and_replace(bank, state.cluster_states.back(), state.cluster_rng);
        break;
      case Regime::hard:
        cs.assignments.assign(static_cast<std::size_t>(bank.num_tasks()), 0);
        cs.centroids = {flatten_slot(bank, 0)};
        state.cluster_states.push_back(std::move(cs));
        break;
      case Regime::specific:
        for (int j = 0; j < bank.num_tasks(); ++j) {
          cs.assignments.push_back(j);
          cs.centroids.push_back(flatten_slot(bank, j));
        }
        state.cluster_states.push_back(std::move(cs));
        break;
    }
  }
  return state;
}

double total_loss(double lp, double lc, double alpha) { return lp + alpha * lc; }

bool freeze_check(int epoch, const TrainConfig& config) {
  if (config.freeze_after_epochs < 0) return false;
  return epoch >= config.freeze_after_epochs;
}

BatchMetrics train_batch(const TaskBatch& batch, TrainState& state,
                         const TrainConfig& config) {
  if (batch.examples.empty()) throw ArgumentError("train_batch: empty batch");

  ModelParams& params = state.params;
  const int n = params.num_tasks();

  BatchMetrics metrics;
  metrics.task_correct.assign(static_cast<std::size_t>(n), 0);
  metrics.task_count.assign(static_cast<std::size_t>(n), 0);
  metrics.task_lp_sum.assign(static_cast<std::size_t>(n), 0.0);

  const ForwardCache cache = forward_batch(batch, params);

  double lp_total = 0.0;
  for (std::size_t e = 0; e < batch.size(); ++e) {
    const Example& ex = batch.examples[e];
    const Vector& probs = cache.examples[e].head.post;
    const double ce = -std::log(std::max(probs[ex.label], 1e-12));
    lp_total += ce;

    Eigen::Index pred = 0;
    for (Eigen::Index c = 1; c < probs.size(); ++c) {
      if (probs[c] > probs[pred]) pred = c;
    }
    const std::size_t task = static_cast<std::size_t>(ex.task_id);
    metrics.task_lp_sum[task] += ce;
    ++metrics.task_count[task];
    if (static_cast<int>(pred) == ex.label) ++metrics.task_correct[task];
  }
  metrics.loss_lp = lp_total / static_cast<double>(batch.size());
  metrics.loss_lc = config.regime == Regime::cluster
                        ? clustering_loss(params.cluster_layers, state.cluster_states)
                        : 0.0;
  metrics.loss_total = total_loss(metrics.loss_lp, metrics.loss_lc, config.alpha);
  if (!std::isfinite(metrics.loss_total)) {
    throw DivergedError("non-finite loss at batch " + std::to_string(state.batch_counter));
  }

  const LossTerms terms = (config.regime == Regime::cluster &&
                           config.cluster_grad == ClusterGrad::full)
                              ? LossTerms::full
                              : LossTerms::lp_only;
  GradientSet grads =
      backward(batch, cache, params, terms, state.cluster_states, config.alpha);
  const std::string bad = first_non_finite(grads);
  if (!bad.empty()) {
    throw DivergedError("non-finite gradient in " + bad + " at batch " +
                        std::to_string(state.batch_counter));
  }

  if (config.regime == Regime::hard) tie_slot_gradients(grads);
  optimizer_step(params, grads, state.optimizer, config.learning_rate);

  if (config.regime == Regime::cluster) {
    const bool frozen = freeze_check(state.epoch, config);
    for (std::size_t i = 0; i < params.cluster_layers.size(); ++i) {
      ClusterLayerBank& bank = params.cluster_layers[i];
      ClusterState& cs = state.cluster_states[i];
      cs.frozen = frozen;
      if (frozen) {
        recenter_within_assignments(bank, cs);
      } else {
        cluster_and_replace(bank, cs, state.cluster_rng);
      }
      assert(clustering_loss_layer(bank, cs) <= 1e-12);
    }
  } else {
    sync_states_to_slots(params, state.cluster_states, config.regime);
  }

  ++state.batch_counter;
  return metrics;
}

namespace {

std::vector<TaskBatch> make_batches(const std::vector<TaskDataset>& train_sets,
                                    const TrainConfig& config, Rng& rng) {
  std::vector<TaskBatch> batches;
  const std::size_t batch_size = static_cast<std::size_t>(config.batch_size);

  auto example_of = [&](int task, int row) {
    Example ex;
    ex.features = train_sets[static_cast<std::size_t>(task)].features.row(row).transpose();
    ex.label = train_sets[static_cast<std::size_t>(task)].labels[static_cast<std::size_t>(row)];
    ex.task_id = task;
    return ex;
  };

  if (config.batching == Batching::per_task) {
    // Every batch holds batch_size examples of every task; smaller tasks wrap
    // around within the epoch so each step still covers all tasks.
    std::vector<std::vector<int>> order(train_sets.size());
    std::size_t max_examples = 0;
    for (std::size_t t = 0; t < train_sets.size(); ++t) {
      order[t].resize(static_cast<std::size_t>(train_sets[t].size()));
      std::iota(order[t].begin(), order[t].end(), 0);
      std::shuffle(order[t].begin(), order[t].end(), rng);
      max_examples = std::max(max_examples, order[t].size());
    }
    const std::size_t steps = (max_examples + batch_size - 1) / batch_size;
    for (std::size_t step = 0; step < steps; ++step) {
      TaskBatch batch;
      for (std::size_t t = 0; t < train_sets.size(); ++t) {
        if (order[t].empty()) continue;
        const std::size_t n = order[t].size();
        const std::size_t take = std::min(batch_size, n);
        for (std::size_t i = 0; i < take; ++i) {
          const std::size_t idx = (step * batch_size + i) % n;
          batch.examples.push_back(example_of(static_cast<int>(t), order[t][idx]));
        }
      }
      batches.push_back(std::move(batch));
    }
    return batches;
  }

  if (config.batching == Batching::mixed) {
    std::vector<std::pair<int, int>> pool;
    for (std::size_t t = 0; t < train_sets.size(); ++t) {
      for (int r = 0; r < train_sets[t].size(); ++r) {
        pool.emplace_back(static_cast<int>(t), r);
      }
    }
    std::shuffle(pool.begin(), pool.end(), rng);
    for (std::size_t start = 0; start < pool.size(); start += batch_size) {
      TaskBatch batch;
      const std::size_t end = std::min(pool.size(), start + batch_size);
      for (std::size_t i = start; i < end; ++i) {
        batch.examples.push_back(example_of(pool[i].first, pool[i].second));
      }
      batches.push_back(std::move(batch));
    }
    return batches;
  }

  // round_robin: one task per batch, cycling through tasks.
  std::vector<std::vector<int>> rows(train_sets.size());
  std::vector<std::size_t> cursor(train_sets.size(), 0);
  for (std::size_t t = 0; t < train_sets.size(); ++t) {
    rows[t].resize(static_cast<std::size_t>(train_sets[t].size()));
    std::iota(rows[t].begin(), rows[t].end(), 0);
    std::shuffle(rows[t].begin(), rows[t].end(), rng);
  }
  bool any_left = true;
  while (any_left) {
    any_left = false;
    for (std::size_t t = 0; t < train_sets.size(); ++t) {
      if (cursor[t] >= rows[t].size()) continue;
      TaskBatch batch;
      const std::size_t end = std::min(rows[t].size(), cursor[t] + batch_size);
      for (std::size_t i = cursor[t]; i < end; ++i) {
        batch.examples.push_back(example_of(static_cast<int>(t), rows[t][i]));
      }
      cursor[t] = end;
      batches.push_back(std::move(batch));
      if (cursor[t] < rows[t].size()) any_left = true;
    }
  }
  return batches;
}

}  // namespace

TaskEval evaluate_task(const ModelParams& params, const TaskDataset& dataset) {
  TaskEval eval;
  if (dataset.size() == 0) return eval;
  int correct = 0;
  std::vector<Vector> probs;
  std::vector<Vector> labels;
  probs.reserve(static_cast<std::size_t>(dataset.size()));
  for (int r = 0; r < dataset.size(); ++r) {
    const Vector p = model_forward(dataset.features.row(r).transpose(), dataset.task_id, params);
    Eigen::Index pred = 0;
    for (Eigen::Index c = 1; c < p.size(); ++c) {
      if (p[c] > p[pred]) pred = c;
    }
    if (static_cast<int>(pred) == dataset.labels[static_cast<std::size_t>(r)]) ++correct;
    labels.push_back(one_hot(dataset.labels[static_cast<std::size_t>(r)], p.size()));
    probs.push_back(p);
  }
  eval.accuracy = static_cast<double>(correct) / static_cast<double>(dataset.size());
  eval.mean_lp = classification_loss(probs, labels);
  return eval;
}

AccuracyTable evaluate(const ModelParams& params,
                       const std::vector<ClusterState>& cluster_states,
                       const std::vector<TaskDataset>& test_sets) {
  (void)cluster_states;  // slots already hold their centroids after training
  AccuracyTable table;
  double sum = 0.0;
  int present = 0;
  for (const TaskDataset& task : test_sets) {
    const TaskEval eval = evaluate_task(params, task);
    table.per_task.push_back(eval.accuracy);
    if (eval.accuracy) {
      sum += *eval.accuracy;
      ++present;
    }
  }
  if (present > 0) table.average = sum / static_cast<double>(present);
  return table;
}

std::vector<LayerDump> dump_cluster_layers(const ModelParams& params,
                                           const std::vector<ClusterState>& states) {
  std::vector<LayerDump> dumps;
  for (std::size_t i = 0; i < states.size(); ++i) {
    LayerDump dump;
    dump.layer = static_cast<int>(i);
    dump.cluster_count = static_cast<int>(states[i].centroids.size());
    dump.assignments = states[i].assignments;
    for (const Vector& c : states[i].centroids) dump.centroid_norms.push_back(c.norm());
    dump.frozen = states[i].frozen;
    dumps.push_back(std::move(dump));
  }
  (void)params;
  return dumps;
}

TrainResult run_training(const TrainConfig& config,
                         const std::vector<TaskDataset>& train_sets,
                         const std::vector<TaskDataset>& test_sets) {
  validate_config(config);
  if (static_cast<int>(train_sets.size()) != config.num_tasks ||
      static_cast<int>(test_sets.size()) != config.num_tasks) {
    throw ConfigError("run_training: expected one train and one test dataset per task");
  }
  for (const TaskDataset& task : train_sets) {
    if (task.features.cols() != config.input_dim) {
      throw ConfigError("run_training: dataset '" + task.name + "' has feature dim " +
                        std::to_string(task.features.cols()) + ", config says " +
                        std::to_string(config.input_dim));
    }
  }

  TrainState state = init_train_state(config);
  TrainResult result;

  const int n = config.num_tasks;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    state.epoch = epoch;
    std::vector<int> correct(static_cast<std::size_t>(n), 0);
    std::vector<int> count(static_cast<std::size_t>(n), 0);
    std::vector<double> lp_sum(static_cast<std::size_t>(n), 0.0);
    double lc_sum = 0.0;
    int batches_run = 0;

    const std::vector<TaskBatch> batches = make_batches(train_sets, config, state.data_rng);
    try {
      for (const TaskBatch& batch : batches) {
        const BatchMetrics m = train_batch(batch, state, config);
        result.batch_losses.push_back({m.loss_total, m.loss_lp, m.loss_lc});
        for (int t = 0; t < n; ++t) {
          correct[static_cast<std::size_t>(t)] += m.task_correct[static_cast<std::size_t>(t)];
          count[static_cast<std::size_t>(t)] += m.task_count[static_cast<std::size_t>(t)];
          lp_sum[static_cast<std::size_t>(t)] += m.task_lp_sum[static_cast<std::size_t>(t)];
        }
        lc_sum += m.loss_lc;
        ++batches_run;
      }
    } catch (const DivergedError& err) {
      result.diverged = true;
      result.divergence_reason = err.what();
    }

    const double epoch_lc = batches_run > 0 ? lc_sum / batches_run : 0.0;
    for (int t = 0; t < n; ++t) {
      MetricsRecord rec;
      rec.epoch = epoch;
      rec.task_id = t;
      rec.split = "train";
      const int c = count[static_cast<std::size_t>(t)];
      if (c > 0) {
        rec.accuracy = static_cast<double>(correct[static_cast<std::size_t>(t)]) / c;
        rec.loss_lp = lp_sum[static_cast<std::size_t>(t)] / c;
      }
      rec.loss_lc = epoch_lc;
      result.history.push_back(std::move(rec));
    }

    if (result.diverged) break;  // model unusable; train rows above are kept

    const double test_lc = config.regime == Regime::cluster
                               ? clustering_loss(state.params.cluster_layers, state.cluster_states)
                               : 0.0;
    for (int t = 0; t < n; ++t) {
      const TaskEval eval = evaluate_task(state.params, test_sets[static_cast<std::size_t>(t)]);
      MetricsRecord rec;
      rec.epoch = epoch;
      rec.task_id = t;
      rec.split = "test";
      rec.accuracy = eval.accuracy;
      rec.loss_lp = eval.mean_lp;
      rec.loss_lc = test_lc;
      result.history.push_back(std::move(rec));
    }

    EpochDump dump;
    dump.epoch = epoch;
    dump.layers = dump_cluster_layers(state.params, state.cluster_states);
    result.dumps.push_back(std::move(dump));
  }

  result.params = std::move(state.params);
  result.cluster_states = std::move(state.cluster_states);
  return result;
}

}  // namespace ncmtl
