#include "ncmtl/kmeans.hpp"

#include <cassert>
#include <limits>
#include <string>

namespace ncmtl {

namespace {

int nearest_center(const Matrix& centers, const Eigen::RowVectorXd& p) {
  int best = 0;
  double best_d = (centers.row(0) - p).squaredNorm();
  for (int k = 1; k < centers.rows(); ++k) {
    const double d = (centers.row(k) - p).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

double sse(const Matrix& points, const IndexVector& assign, const Matrix& centers) {
  double total = 0.0;
  for (Eigen::Index p = 0; p < points.rows(); ++p) {
    total += (points.row(p) - centers.row(assign[p])).squaredNorm();
  }
  return total;
}

std::vector<int> cluster_sizes(const IndexVector& assign, int k) {
  std::vector<int> sizes(static_cast<std::size_t>(k), 0);
  for (Eigen::Index p = 0; p < assign.size(); ++p) {
    ++sizes[static_cast<std::size_t>(assign[p])];
  }
  return sizes;
}

// Moves the worst-fitting point of a multi-member cluster into each empty
// cluster, reseeding that cluster's center to the point itself.
void repair_empty_clusters(const Matrix& points, IndexVector& assign, Matrix& centers) {
  const int k = static_cast<int>(centers.rows());
  std::vector<int> sizes = cluster_sizes(assign, k);
  for (int empty = 0; empty < k; ++empty) {
    if (sizes[static_cast<std::size_t>(empty)] > 0) continue;
    int best_point = -1;
    double best_d = -1.0;
    for (Eigen::Index p = 0; p < points.rows(); ++p) {
      if (sizes[static_cast<std::size_t>(assign[p])] <= 1) continue;
      const double d = (points.row(p) - centers.row(assign[p])).squaredNorm();
      if (d > best_d) {
        best_d = d;
        best_point = static_cast<int>(p);
      }
    }
    if (best_point < 0) continue;  // k > number of points; caller validates
    --sizes[static_cast<std::size_t>(assign[best_point])];
    assign[best_point] = empty;
    sizes[static_cast<std::size_t>(empty)] = 1;
    centers.row(empty) = points.row(best_point);
  }
}

}  // namespace

Matrix kmeans_pp_seed(const Matrix& points, int k, Rng& rng) {
  const Eigen::Index n = points.rows();
  if (k < 1 || k > n) {
    throw ArgumentError("kmeans_pp_seed: k=" + std::to_string(k) +
                        " outside [1, " + std::to_string(n) + "]");
  }

  std::vector<int> chosen;
  chosen.reserve(static_cast<std::size_t>(k));
  std::vector<bool> is_chosen(static_cast<std::size_t>(n), false);

  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  const int first_idx = static_cast<int>(first(rng));
  chosen.push_back(first_idx);
  is_chosen[static_cast<std::size_t>(first_idx)] = true;

  Vector min_d2(n);
  for (Eigen::Index p = 0; p < n; ++p) {
    min_d2[p] = (points.row(p) - points.row(first_idx)).squaredNorm();
  }

  while (static_cast<int>(chosen.size()) < k) {
    const double total = min_d2.sum();
    int pick = -1;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      const double target = u(rng);
      double cum = 0.0;
      for (Eigen::Index p = 0; p < n; ++p) {
        cum += min_d2[p];
        if (target < cum) {
          pick = static_cast<int>(p);
          break;
        }
      }
      if (pick < 0) {
        // target landed on the accumulated total; take the last positive mass
        for (Eigen::Index p = n - 1; p >= 0; --p) {
          if (min_d2[p] > 0.0) {
            pick = static_cast<int>(p);
            break;
          }
        }
      }
    } else {
      // Remaining points duplicate chosen centers; fall back to a uniform
      // draw over the rows not yet selected so k centers still come back.
      std::vector<int> unchosen;
      for (Eigen::Index p = 0; p < n; ++p) {
        if (!is_chosen[static_cast<std::size_t>(p)]) unchosen.push_back(static_cast<int>(p));
      }
      std::uniform_int_distribution<std::size_t> u(0, unchosen.size() - 1);
      pick = unchosen[u(rng)];
    }
    chosen.push_back(pick);
    is_chosen[static_cast<std::size_t>(pick)] = true;
    for (Eigen::Index p = 0; p < n; ++p) {
      const double d = (points.row(p) - points.row(pick)).squaredNorm();
      if (d < min_d2[p]) min_d2[p] = d;
    }
  }

  Matrix centers(k, points.cols());
  for (int i = 0; i < k; ++i) {
    centers.row(i) = points.row(chosen[static_cast<std::size_t>(i)]);
  }
  return centers;
}

ClusteringResult lloyd_iterate(const Matrix& points, Matrix centers,
                               int max_iter, double tol) {
  const Eigen::Index n = points.rows();
  const int k = static_cast<int>(centers.rows());
  if (k < 1 || centers.cols() != points.cols()) {
    throw ArgumentError("lloyd_iterate: centers empty or dimension mismatch");
  }

  ClusteringResult result;
  IndexVector assign = IndexVector::Constant(n, -1);
  IndexVector prev_assign;
  int iter = 0;

  for (; iter < max_iter; ++iter) {
    for (Eigen::Index p = 0; p < n; ++p) {
      assign[p] = nearest_center(centers, points.row(p));
    }
    repair_empty_clusters(points, assign, centers);

    if (prev_assign.size() == n && (assign.array() == prev_assign.array()).all()) {
      break;  // assignments stable, centers already equal the cluster means
    }

    Matrix new_centers = Matrix::Zero(k, points.cols());
    std::vector<int> sizes = cluster_sizes(assign, k);
    for (Eigen::Index p = 0; p < n; ++p) {
      new_centers.row(assign[p]) += points.row(p);
    }
    double movement = 0.0;
    for (int c = 0; c < k; ++c) {
      new_centers.row(c) /= static_cast<double>(sizes[static_cast<std::size_t>(c)]);
      movement = std::max(movement, (new_centers.row(c) - centers.row(c)).norm());
    }
    centers = new_centers;

    const double inertia = sse(points, assign, centers);
    assert(result.inertia_history.empty() ||
           inertia <= result.inertia_history.back() + 1e-9);
    result.inertia_history.push_back(inertia);
    prev_assign = assign;

    if (movement < tol) {
      ++iter;
      break;
    }
  }

  result.assignments = assign;
  result.centers = centers;
  result.inertia = sse(points, assign, centers);
  result.iterations = iter;
  return result;
}

ClusteringResult cluster_tasks(const Matrix& points, int k, Rng& rng) {
  Matrix centers = kmeans_pp_seed(points, k, rng);
  return lloyd_iterate(points, std::move(centers));
}

}  // namespace ncmtl
