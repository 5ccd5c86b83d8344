// SPDX-License-Identifier: Apache-2.0
//
// Clustering and assignment used for evaluation and pseudo-labelling.

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "infosieve/matrix.hpp"

namespace infosieve::cluster {

struct ClusterAssignment {
  Matrix centroids;             // [K x d]
  std::vector<int> assign;      // cluster id per point
  double objective = 0.0;       // sum of squared distances to assigned centroids
  std::vector<double> history;  // objective after every iteration
  int iterations = 0;
};

/// Labeled point index -> class index in [0, C).
using Anchors = std::map<std::size_t, int>;

/// Lloyd's algorithm with k-means++ seeding. Stops when the assignment is
/// unchanged or the objective improves by at most tol. An empty cluster is
/// re-seeded with the point farthest from its own centroid.
ClusterAssignment kmeans(const Matrix& x, std::size_t k, std::uint64_t seed, int max_iter = 100, double tol = 0.0);

/// Semi-supervised k-means: clusters 0..C-1 start at the labeled class
/// means and keep their labeled points for good; the remaining K-C centroids
/// are k-means++ seeded from unlabeled points.
ClusterAssignment ss_kmeans(const Matrix& x, const Anchors& labeled, std::size_t k, std::uint64_t seed,
                            int max_iter = 100);

/// Seed of restart r (r = 0 returns seed itself).
std::uint64_t restart_seed(std::uint64_t seed, int r);

/// Best of n_init runs by final objective; the earliest wins ties.
ClusterAssignment kmeans_restarts(const Matrix& x, std::size_t k, std::uint64_t seed, int n_init);
ClusterAssignment ss_kmeans_restarts(const Matrix& x, const Anchors& labeled, std::size_t k, std::uint64_t seed,
                                     int n_init);

/// k-means whose assignment step fills clusters greedily by distance under
/// capacities floor(N/K) or ceil(N/K), so every size is within one of N/K.
/// Pinned points stay in their cluster and count toward its capacity.
ClusterAssignment balanced_kmeans(const Matrix& x, std::size_t k, std::uint64_t seed, int max_iter = 100,
                                  const Anchors& pinned = {});

struct Matching {
  std::vector<int> row_to_col;  // -1 for rows left unmatched (more rows than columns)
  double cost = 0.0;
};

/// Minimum-cost one-to-one assignment; rectangular inputs are zero-padded.
Matching hungarian(const Matrix& cost);

struct GcdMetrics {
  double acc_all = 0.0;
  double acc_known = 0.0;
  double acc_novel = 0.0;
  std::size_t n_all = 0;
  std::size_t n_known = 0;
  std::size_t n_novel = 0;
  std::map<int, int> matching;  // cluster id -> class id

  friend bool operator==(const GcdMetrics&, const GcdMetrics&) = default;
};

/// Accuracy on the samples outside labeled_idx. One Hungarian matching,
/// maximising total agreement over all of them, is shared by the All, Known
/// and Novel subsets. pred and gt are indexed by sample.
GcdMetrics gcd_accuracy(std::span<const int> pred, std::span<const int> gt, std::span<const int> known_classes,
                        std::span<const std::size_t> labeled_idx);

double squared_distance(std::span<const double> a, std::span<const double> b);

}  // namespace infosieve::cluster
