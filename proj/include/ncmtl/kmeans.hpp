#pragma once

#include <vector>

#include "ncmtl/errors.hpp"
#include "ncmtl/types.hpp"

namespace ncmtl {

/// Result of a k-means run over N points (rows) of dimension D.
struct ClusteringResult {
  IndexVector assignments;              // N entries in [0, K)
  Matrix centers;                       // K x D, each the mean of its members
  double inertia = 0.0;                 // total within-cluster squared distance
  int iterations = 0;
  std::vector<double> inertia_history;  // one entry per Lloyd iteration
};

/// k-means++ seeding: first center uniform over the points, each further
/// center drawn with probability proportional to the squared distance to the
/// nearest already-chosen center. Chosen centers are rows of `points`.
/// When every remaining point coincides with a chosen center the draw falls
/// back to uniform over the not-yet-chosen rows.
Matrix kmeans_pp_seed(const Matrix& points, int k, Rng& rng);

/// Lloyd refinement: alternate nearest-center assignment (ties to the lowest
/// center index) and center-mean recomputation until assignments stabilise,
/// center movement drops below `tol`, or `max_iter` is reached. A cluster
/// left empty by assignment is repaired by moving in the point farthest from
/// its current center; no returned cluster is empty.
ClusteringResult lloyd_iterate(const Matrix& points, Matrix centers,
                               int max_iter = 100, double tol = 1e-9);

/// kmeans_pp_seed followed by lloyd_iterate. Deterministic given
/// (points, k, rng state).
ClusteringResult cluster_tasks(const Matrix& points, int k, Rng& rng);

}  // namespace ncmtl
