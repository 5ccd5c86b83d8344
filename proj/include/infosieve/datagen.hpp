// SPDX-License-Identifier: Apache-2.0
//
// Synthetic hierarchical data, category-discovery splits, contrastive
// views and the plain-text embedding format.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "infosieve/matrix.hpp"
#include "infosieve/treelab.hpp"

namespace infosieve::data {

struct HierDataset {
  Matrix features;                    // [N x D]
  std::vector<int> labels;            // category id per sample
  std::vector<long long> ids;         // external sample ids
  std::vector<std::string> category_paths;  // root-to-leaf path per category id, synthetic only
  std::optional<tree::CategoryTree> gt_tree;  // over categories; absent for ingested embeddings
  std::uint64_t seed = 0;
  double noise_sigma = 0.0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.cols(); }
  /// Distinct labels, ascending.
  std::vector<int> classes() const;
};

struct GcdSplit {
  std::vector<int> known_classes;       // ascending
  std::vector<std::size_t> labeled_idx;    // ascending
  std::vector<std::size_t> unlabeled_idx;  // ascending

  bool is_known(int category) const;
};

struct HierParams {
  std::uint64_t seed = 0;
  int depth = 3;
  int per_leaf = 20;
  int dim = 64;
  double noise_sigma = 0.05;
  double level_scale = 0.7;
};

/// Complete binary tree of the given depth; every node owns a random unit
/// direction scaled by level_scale^level. A sample of leaf c is the sum of
/// the vectors on c's root path plus isotropic Gaussian noise. Samples are
/// ordered by leaf, per_leaf each.
HierDataset gen_hier_dataset(const HierParams& p);

/// Picks floor(known_class_frac * C) known classes and labels
/// floor(labeled_frac * n_c) samples of each. Everything else is unlabeled.
GcdSplit gcd_split(const HierDataset& ds, double known_class_frac, double labeled_frac, std::uint64_t seed);

/// Gaussian jitter followed by zeroing round(drop_frac * dim) coordinates.
std::vector<double> augment(std::span<const double> x, std::mt19937_64& rng, double sigma_aug, double drop_frac);
std::vector<double> augment(std::span<const double> x, std::uint64_t seed, double sigma_aug, double drop_frac);

/// Format: header `emb v1 <N> <D>`, then N rows `id,label,f0,...,f{D-1}`.
HierDataset load_embedding_file(const std::filesystem::path& path);
HierDataset parse_embeddings(const std::string& text);
void save_embedding_file(const HierDataset& ds, const std::filesystem::path& path);
std::string format_embeddings(const HierDataset& ds);

}  // namespace infosieve::data
