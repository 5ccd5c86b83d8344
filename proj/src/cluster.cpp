// SPDX-License-Identifier: Apache-2.0

#include "infosieve/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>
#include <string>

namespace infosieve::cluster {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

namespace {

void check_k(const Matrix& x, std::size_t k) {
  if (k == 0) throw std::invalid_argument("k-means: K must be positive");
  if (k > x.rows()) {
    throw std::invalid_argument("k-means: K=" + std::to_string(k) + " exceeds " + std::to_string(x.rows()) + " points");
  }
}

int nearest(const Matrix& x, std::size_t i, const Matrix& centroids) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    const double d = squared_distance(x.row_span(i), centroids.row_span(c));
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

/// Seeds centroids [first, K) by k-means++ among the candidate points,
/// given the already-placed centroids [0, first).
void plus_plus(const Matrix& x, std::span<const std::size_t> candidates, Matrix& centroids, std::size_t first,
               std::mt19937_64& rng) {
  const std::size_t d = x.cols();
  std::vector<double> dist(candidates.size(), std::numeric_limits<double>::infinity());
  auto refresh = [&](std::size_t c) {
    for (std::size_t j = 0; j < candidates.size(); ++j)
      dist[j] = std::min(dist[j], squared_distance(x.row_span(candidates[j]), centroids.row_span(c)));
  };
  for (std::size_t c = 0; c < first; ++c) refresh(c);
  for (std::size_t c = first; c < centroids.rows(); ++c) {
    std::size_t pick = 0;
    const double total = c == 0 ? 0.0 : std::accumulate(dist.begin(), dist.end(), 0.0);
    if (c == 0 || !(total > 0.0)) {
      std::uniform_int_distribution<std::size_t> u(0, candidates.size() - 1);
      pick = u(rng);
    } else {
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng);
      for (pick = 0; pick + 1 < candidates.size(); ++pick) {
        r -= dist[pick];
        if (r < 0.0) break;
      }
    }
    for (std::size_t j = 0; j < d; ++j) centroids(c, j) = x(candidates[pick], j);
    refresh(c);
  }
}

void update_centroids(const Matrix& x, const std::vector<int>& assign, Matrix& centroids) {
  std::vector<std::size_t> counts(centroids.rows(), 0);
  Matrix sums(centroids.rows(), centroids.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto c = static_cast<std::size_t>(assign[i]);
    ++counts[c];
    for (std::size_t j = 0; j < x.cols(); ++j) sums(c, j) += x(i, j);
  }
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    if (counts[c] == 0) continue;
    for (std::size_t j = 0; j < x.cols(); ++j) centroids(c, j) = sums(c, j) / static_cast<double>(counts[c]);
  }
}

double objective_of(const Matrix& x, const std::vector<int>& assign, const Matrix& centroids) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i)
    acc += squared_distance(x.row_span(i), centroids.row_span(static_cast<std::size_t>(assign[i])));
  return acc;
}

/// Moves, for each empty cluster, the movable point farthest from its
/// centroid into it. Points in singleton clusters are never taken.
void reseed_empty(const Matrix& x, std::vector<int>& assign, Matrix& centroids, const std::vector<char>& movable) {
  std::vector<std::size_t> counts(centroids.rows(), 0);
  for (int a : assign) ++counts[static_cast<std::size_t>(a)];
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    if (counts[c] != 0) continue;
    double far = -1.0;
    std::size_t pick = x.rows();
    for (std::size_t i = 0; i < x.rows(); ++i) {
      const auto own = static_cast<std::size_t>(assign[i]);
      if (!movable[i] || counts[own] < 2) continue;
      const double d = squared_distance(x.row_span(i), centroids.row_span(own));
      if (d > far) {
        far = d;
        pick = i;
      }
    }
    if (pick == x.rows()) continue;
    --counts[static_cast<std::size_t>(assign[pick])];
    assign[pick] = static_cast<int>(c);
    counts[c] = 1;
    for (std::size_t j = 0; j < x.cols(); ++j) centroids(c, j) = x(pick, j);
  }
}

}  // namespace

ClusterAssignment kmeans(const Matrix& x, std::size_t k, std::uint64_t seed, int max_iter, double tol) {
  check_k(x, k);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> all(x.rows());
  std::iota(all.begin(), all.end(), std::size_t{0});
  ClusterAssignment out;
  out.centroids = Matrix(k, x.cols());
  plus_plus(x, all, out.centroids, 0, rng);
  const std::vector<char> movable(x.rows(), 1);

  std::vector<int> prev;
  for (int it = 0; it < max_iter; ++it) {
    out.assign.assign(x.rows(), 0);
    for (std::size_t i = 0; i < x.rows(); ++i) out.assign[i] = nearest(x, i, out.centroids);
    reseed_empty(x, out.assign, out.centroids, movable);
    update_centroids(x, out.assign, out.centroids);
    out.objective = objective_of(x, out.assign, out.centroids);
    out.iterations = it + 1;
    const bool converged = out.assign == prev ||
                           (!out.history.empty() && out.history.back() - out.objective <= tol && tol > 0.0);
    out.history.push_back(out.objective);
    if (converged) break;
    prev = out.assign;
  }
  return out;
}

ClusterAssignment ss_kmeans(const Matrix& x, const Anchors& labeled, std::size_t k, std::uint64_t seed,
                            int max_iter) {
  check_k(x, k);
  int n_classes = 0;
  for (const auto& [idx, c] : labeled) {
    if (idx >= x.rows()) throw std::invalid_argument("ss_kmeans: labeled index out of range");
    if (c < 0) throw std::invalid_argument("ss_kmeans: negative class index");
    n_classes = std::max(n_classes, c + 1);
  }
  if (static_cast<std::size_t>(n_classes) > k) {
    throw std::invalid_argument("ss_kmeans: " + std::to_string(n_classes) + " labeled classes exceed K=" +
                                std::to_string(k));
  }

  ClusterAssignment out;
  out.centroids = Matrix(k, x.cols());
  std::vector<std::size_t> counts(static_cast<std::size_t>(n_classes), 0);
  for (const auto& [idx, c] : labeled) {
    ++counts[static_cast<std::size_t>(c)];
    for (std::size_t j = 0; j < x.cols(); ++j) out.centroids(static_cast<std::size_t>(c), j) += x(idx, j);
  }
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) throw std::invalid_argument("ss_kmeans: class " + std::to_string(c) + " has no labeled point");
    for (std::size_t j = 0; j < x.cols(); ++j) out.centroids(c, j) /= static_cast<double>(counts[c]);
  }

  std::vector<char> movable(x.rows(), 1);
  std::vector<std::size_t> unlabeled;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    if (labeled.count(i)) {
      movable[i] = 0;
    } else {
      unlabeled.push_back(i);
    }
  }
  std::mt19937_64 rng(seed);
  if (static_cast<std::size_t>(n_classes) < k) {
    if (unlabeled.size() < k - static_cast<std::size_t>(n_classes)) {
      throw std::invalid_argument("ss_kmeans: not enough unlabeled points to seed the remaining clusters");
    }
    plus_plus(x, unlabeled, out.centroids, static_cast<std::size_t>(n_classes), rng);
  }

  std::vector<int> prev;
  for (int it = 0; it < max_iter; ++it) {
    out.assign.assign(x.rows(), 0);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      auto found = labeled.find(i);
      out.assign[i] = found != labeled.end() ? found->second : nearest(x, i, out.centroids);
    }
    reseed_empty(x, out.assign, out.centroids, movable);
    update_centroids(x, out.assign, out.centroids);
    out.objective = objective_of(x, out.assign, out.centroids);
    out.history.push_back(out.objective);
    out.iterations = it + 1;
    if (out.assign == prev || unlabeled.empty()) break;
    prev = out.assign;
  }
  return out;
}

std::uint64_t restart_seed(std::uint64_t seed, int r) {
  return r == 0 ? seed : seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(r);
}

namespace {

template <class Run>
ClusterAssignment best_of(int n_init, std::uint64_t seed, Run run) {
  if (n_init < 1) throw std::invalid_argument("n_init must be >= 1");
  ClusterAssignment best = run(seed);
  for (int r = 1; r < n_init; ++r) {
    ClusterAssignment next = run(restart_seed(seed, r));
    if (next.objective < best.objective) best = std::move(next);
  }
  return best;
}

}  // namespace

ClusterAssignment kmeans_restarts(const Matrix& x, std::size_t k, std::uint64_t seed, int n_init) {
  return best_of(n_init, seed, [&](std::uint64_t s) { return kmeans(x, k, s); });
}

ClusterAssignment ss_kmeans_restarts(const Matrix& x, const Anchors& labeled, std::size_t k, std::uint64_t seed,
                                     int n_init) {
  return best_of(n_init, seed, [&](std::uint64_t s) { return ss_kmeans(x, labeled, k, s); });
}

ClusterAssignment balanced_kmeans(const Matrix& x, std::size_t k, std::uint64_t seed, int max_iter,
                                  const Anchors& pinned) {
  check_k(x, k);
  for (const auto& [idx, c] : pinned) {
    if (idx >= x.rows() || c < 0 || static_cast<std::size_t>(c) >= k) {
      throw std::invalid_argument("balanced_kmeans: pinned point out of range");
    }
  }
  const std::size_t n = x.rows();
  const std::size_t floor_size = n / k;
  const std::size_t extra = n % k;  // clusters allowed one more point
  const std::size_t ceil_size = floor_size + (extra ? 1 : 0);

  std::mt19937_64 rng(seed);
  ClusterAssignment out;
  out.centroids = Matrix(k, x.cols());
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  plus_plus(x, all, out.centroids, 0, rng);

  std::vector<int> prev;
  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
  pairs.reserve(n * k);
  for (int it = 0; it < max_iter; ++it) {
    out.assign.assign(n, -1);
    std::vector<std::size_t> sizes(k, 0);
    for (const auto& [idx, c] : pinned) {
      out.assign[idx] = c;
      ++sizes[static_cast<std::size_t>(c)];
    }
    std::size_t at_ceil = 0;
    for (std::size_t c = 0; c < k; ++c)
      if (extra && sizes[c] >= ceil_size) ++at_ceil;

    pairs.clear();
    for (std::size_t i = 0; i < n; ++i) {
      if (out.assign[i] >= 0) continue;
      for (std::size_t c = 0; c < k; ++c)
        pairs.emplace_back(squared_distance(x.row_span(i), out.centroids.row_span(c)), i, c);
    }
    std::sort(pairs.begin(), pairs.end());
    for (const auto& [d, i, c] : pairs) {
      if (out.assign[i] >= 0) continue;
      const bool room = sizes[c] < floor_size || (extra && sizes[c] == floor_size && at_ceil < extra);
      if (!room) continue;
      out.assign[i] = static_cast<int>(c);
      if (++sizes[c] == ceil_size && extra) ++at_ceil;
    }
    // Only reachable when pinned points overfill clusters.
    for (std::size_t i = 0; i < n; ++i)
      if (out.assign[i] < 0) out.assign[i] = nearest(x, i, out.centroids);

    update_centroids(x, out.assign, out.centroids);
    out.objective = objective_of(x, out.assign, out.centroids);
    out.history.push_back(out.objective);
    out.iterations = it + 1;
    if (out.assign == prev) break;
    prev = out.assign;
  }
  return out;
}

// Kuhn-Munkres with row/column potentials, O(n^2 m) for n <= m.
Matching hungarian(const Matrix& cost) {
  const std::size_t rows = cost.rows(), cols = cost.cols();
  for (double v : cost.data())
    if (!std::isfinite(v)) throw std::invalid_argument("hungarian: costs must be finite");
  Matching result;
  result.row_to_col.assign(rows, -1);
  if (rows == 0 || cols == 0) return result;

  const std::size_t n = std::max(rows, cols);
  auto at = [&](std::size_t r, std::size_t c) { return r < rows && c < cols ? cost(r, c) : 0.0; };
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = at(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  for (std::size_t j = 1; j <= n; ++j) {
    const std::size_t r = p[j] - 1, c = j - 1;
    if (r < rows && c < cols) {
      result.row_to_col[r] = static_cast<int>(c);
      result.cost += cost(r, c);
    }
  }
  return result;
}

GcdMetrics gcd_accuracy(std::span<const int> pred, std::span<const int> gt, std::span<const int> known_classes,
                        std::span<const std::size_t> labeled_idx) {
  if (pred.size() != gt.size()) throw std::invalid_argument("gcd_accuracy: pred/gt size mismatch");
  std::vector<char> labeled(gt.size(), 0);
  for (std::size_t i : labeled_idx) {
    if (i >= gt.size()) throw std::invalid_argument("gcd_accuracy: labeled index out of range");
    labeled[i] = 1;
  }
  const std::set<int> known(known_classes.begin(), known_classes.end());
  std::vector<std::size_t> eval;
  std::set<int> cluster_ids, class_ids;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (labeled[i]) continue;
    if (pred[i] < 0) throw std::invalid_argument("gcd_accuracy: unlabeled sample " + std::to_string(i) + " has no prediction");
    eval.push_back(i);
    cluster_ids.insert(pred[i]);
    class_ids.insert(gt[i]);
  }
  GcdMetrics m;
  if (eval.empty()) return m;
  const std::vector<int> clusters(cluster_ids.begin(), cluster_ids.end());
  const std::vector<int> classes(class_ids.begin(), class_ids.end());
  auto index_of = [](const std::vector<int>& v, int x) {
    return static_cast<std::size_t>(std::lower_bound(v.begin(), v.end(), x) - v.begin());
  };

  Matrix counts(clusters.size(), classes.size());
  for (std::size_t i : eval) counts(index_of(clusters, pred[i]), index_of(classes, gt[i])) += 1.0;
  double peak = 0.0;
  for (double c : counts.data()) peak = std::max(peak, c);
  Matrix cost(counts.rows(), counts.cols());
  for (std::size_t i = 0; i < cost.size(); ++i) cost[i] = peak - counts[i];
  const Matching match = hungarian(cost);
  for (std::size_t r = 0; r < clusters.size(); ++r)
    if (match.row_to_col[r] >= 0) m.matching[clusters[r]] = classes[static_cast<std::size_t>(match.row_to_col[r])];

  std::size_t hit_all = 0, hit_known = 0, hit_novel = 0;
  for (std::size_t i : eval) {
    auto it = m.matching.find(pred[i]);
    const bool hit = it != m.matching.end() && it->second == gt[i];
    const bool is_known = known.count(gt[i]) != 0;
    ++m.n_all;
    hit_all += hit;
    if (is_known) {
      ++m.n_known;
      hit_known += hit;
    } else {
      ++m.n_novel;
      hit_novel += hit;
    }
  }
  m.acc_all = static_cast<double>(hit_all) / static_cast<double>(m.n_all);
  m.acc_known = m.n_known ? static_cast<double>(hit_known) / static_cast<double>(m.n_known) : 0.0;
  m.acc_novel = m.n_novel ? static_cast<double>(hit_novel) / static_cast<double>(m.n_novel) : 0.0;
  return m;
}

}  // namespace infosieve::cluster
