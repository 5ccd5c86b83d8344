// SPDX-License-Identifier: Apache-2.0
//
// Binary category trees and the codes that address them.
//
// A code is a string over {'0','1'}: '0' descends left, '1' right. A set
// of codes defines a trie whose nodes carry the samples terminating there
// and the samples below them. Category validity, prefix purity and the
// exhaustive minimum-length oracle all work on that view.

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace infosieve::tree {

/// codes[i] is the code of sample i.
struct Encoding {
  std::vector<std::string> codes;

  std::size_t size() const { return codes.size(); }
  std::size_t total_length() const;
  friend bool operator==(const Encoding&, const Encoding&) = default;
  friend auto operator<=>(const Encoding&, const Encoding&) = default;
};

struct TreeNode {
  int left = -1;
  int right = -1;
  int parent = -1;
  std::string path;
  std::vector<int> terminal;     // samples whose code ends here
  std::vector<int> descendants;  // samples at or below this node, ascending
};

class CategoryTree {
 public:
  CategoryTree();

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const TreeNode& root() const { return nodes_.front(); }
  const TreeNode& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  std::size_t sample_count() const { return root().descendants.size(); }

  /// Node reached by following path, if present.
  std::optional<int> find(const std::string& path) const;
  /// Reads every sample's path back out of the tree.
  Encoding read_paths() const;
  /// Depth of each sample, sorted ascending.
  std::vector<std::size_t> depth_multiset() const;

 private:
  friend CategoryTree build_trie(const Encoding& enc, bool allow_shared);
  std::vector<TreeNode> nodes_;
};

struct DuplicateCodeError : std::invalid_argument {
  DuplicateCodeError(int first, int second, const std::string& code);
  int first;
  int second;
};

/// Trie over the codes; each code gets its own terminus. Throws
/// DuplicateCodeError naming the colliding pair.
CategoryTree trie_from_codes(const Encoding& enc);
/// Same, but samples may share a terminus (learned codes often coincide).
CategoryTree trie_from_shared_codes(const Encoding& enc);

struct Validity {
  bool valid = false;
  std::string witness;  // empty when valid
};

/// True iff all codes are distinct and every category has a prefix that
/// is carried by exactly its members.
Validity is_valid_encoding(const Encoding& enc, std::span<const int> labels);

struct PrefixStat {
  int category = 0;
  std::string prefix;          // longest common prefix of the members
  std::size_t members = 0;
  std::size_t carriers = 0;    // samples whose code starts with prefix
  double purity = 0.0;         // members / carriers
};

/// One entry per category, ascending by category id.
std::vector<PrefixStat> category_prefix_stats(const Encoding& enc, std::span<const int> labels);
double mean_purity(std::span<const PrefixStat> stats);

struct OracleResult {
  std::size_t min_total_length = 0;
  std::vector<Encoding> optima;  // every optimal encoding, sorted
};

/// Exact search over all binary trees whose leaves are the samples, keeping
/// the valid ones of minimum total code length. Refuses n > max_n.
OracleResult oracle_optimal_encoding(std::span<const int> labels, std::size_t max_n = 8);

bool depth_multiset_isomorphic(const CategoryTree& a, const CategoryTree& b);

/// Indented text dump, one node per line, left subtree before right:
///   <2*depth spaces><path or "root"> n=<descendants>[ samples=<ids>][ classes=<c>:<k>,...]
/// `classes` is emitted only when labels are given.
std::string dump_text(const CategoryTree& t, std::span<const int> labels = {});
/// Graphviz digraph of the same tree.
std::string dump_dot(const CategoryTree& t, std::span<const int> labels = {});

/// Tree and purity statistics of a set of (possibly shared) learned codes.
struct LearnedTree {
  Encoding codes;
  CategoryTree tree;
  std::vector<PrefixStat> stats;
  double mean_purity = 0.0;
  std::string text;
  std::string dot;
};

LearnedTree summarize_codes(Encoding codes, std::span<const int> labels);

/// Maps arbitrary string labels to dense ids in order of first appearance.
std::vector<int> dense_labels(std::span<const std::string> names);

}  // namespace infosieve::tree
