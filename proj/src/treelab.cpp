// SPDX-License-Identifier: Apache-2.0

#include "infosieve/treelab.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <unordered_map>

namespace infosieve::tree {

std::size_t Encoding::total_length() const {
  std::size_t n = 0;
  for (const auto& c : codes) n += c.size();
  return n;
}

DuplicateCodeError::DuplicateCodeError(int a, int b, const std::string& code)
    : std::invalid_argument("duplicate code '" + code + "' for samples " + std::to_string(a) + " and " +
                            std::to_string(b)),
      first(a),
      second(b) {}

CategoryTree::CategoryTree() { nodes_.emplace_back(); }

std::optional<int> CategoryTree::find(const std::string& path) const {
  int cur = 0;
  for (char ch : path) {
    const TreeNode& n = nodes_[static_cast<std::size_t>(cur)];
    cur = ch == '1' ? n.right : n.left;
    if (cur < 0) return std::nullopt;
  }
  return cur;
}

Encoding CategoryTree::read_paths() const {
  Encoding enc;
  enc.codes.resize(sample_count());
  for (const auto& n : nodes_)
    for (int s : n.terminal) enc.codes.at(static_cast<std::size_t>(s)) = n.path;
  return enc;
}

std::vector<std::size_t> CategoryTree::depth_multiset() const {
  std::vector<std::size_t> depths;
  for (const auto& n : nodes_)
    for (std::size_t k = 0; k < n.terminal.size(); ++k) depths.push_back(n.path.size());
  std::sort(depths.begin(), depths.end());
  return depths;
}

CategoryTree build_trie(const Encoding& enc, bool allow_shared) {
  CategoryTree t;
  auto& nodes = t.nodes_;
  for (std::size_t i = 0; i < enc.codes.size(); ++i) {
    const int sample = static_cast<int>(i);
    const std::string& code = enc.codes[i];
    int cur = 0;
    nodes[0].descendants.push_back(sample);
    for (std::size_t k = 0; k < code.size(); ++k) {
      const char ch = code[k];
      if (ch != '0' && ch != '1') {
        throw std::invalid_argument("code of sample " + std::to_string(i) + " contains '" + std::string(1, ch) + "'");
      }
      int next = ch == '1' ? nodes[cur].right : nodes[cur].left;
      if (next < 0) {
        TreeNode child;
        child.parent = cur;
        child.path = code.substr(0, k + 1);
        nodes.push_back(std::move(child));
        next = static_cast<int>(nodes.size() - 1);
        (ch == '1' ? nodes[cur].right : nodes[cur].left) = next;
      }
      cur = next;
      nodes[cur].descendants.push_back(sample);
    }
    auto& terminal = nodes[cur].terminal;
    if (!allow_shared && !terminal.empty()) throw DuplicateCodeError(terminal.front(), sample, code);
    terminal.push_back(sample);
  }
  return t;
}

CategoryTree trie_from_codes(const Encoding& enc) { return build_trie(enc, false); }
CategoryTree trie_from_shared_codes(const Encoding& enc) { return build_trie(enc, true); }

namespace {

std::string common_prefix(const std::string& a, const std::string& b) {
  std::size_t k = 0;
  while (k < a.size() && k < b.size() && a[k] == b[k]) ++k;
  return a.substr(0, k);
}

void check_labels(const Encoding& enc, std::span<const int> labels) {
  if (labels.size() != enc.size()) {
    throw std::invalid_argument("labels cover " + std::to_string(labels.size()) + " samples but encoding has " +
                                std::to_string(enc.size()));
  }
}

}  // namespace

Validity is_valid_encoding(const Encoding& enc, std::span<const int> labels) {
  check_labels(enc, labels);
  std::unordered_map<std::string, int> seen;
  for (std::size_t i = 0; i < enc.size(); ++i) {
    auto [it, fresh] = seen.emplace(enc.codes[i], static_cast<int>(i));
    if (!fresh) {
      return {false, "samples " + std::to_string(it->second) + " and " + std::to_string(i) + " share code '" +
                         enc.codes[i] + "'"};
    }
  }
  for (const auto& st : category_prefix_stats(enc, labels)) {
    if (st.carriers != st.members) {
      return {false, "category " + std::to_string(st.category) + ": prefix '" + st.prefix + "' is carried by " +
                         std::to_string(st.carriers - st.members) + " sample(s) of other categories"};
    }
  }
  return {true, {}};
}

std::vector<PrefixStat> category_prefix_stats(const Encoding& enc, std::span<const int> labels) {
  check_labels(enc, labels);
  std::map<int, PrefixStat> by_cat;
  for (std::size_t i = 0; i < enc.size(); ++i) {
    auto [it, fresh] = by_cat.try_emplace(labels[i]);
    PrefixStat& st = it->second;
    st.category = labels[i];
    st.prefix = fresh ? enc.codes[i] : common_prefix(st.prefix, enc.codes[i]);
    ++st.members;
  }
  std::vector<PrefixStat> out;
  for (auto& [cat, st] : by_cat) {
    for (const auto& code : enc.codes)
      if (code.compare(0, st.prefix.size(), st.prefix) == 0) ++st.carriers;
    st.purity = static_cast<double>(st.members) / static_cast<double>(st.carriers);
    out.push_back(st);
  }
  return out;
}

double mean_purity(std::span<const PrefixStat> stats) {
  if (stats.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& s : stats) acc += s.purity;
  return acc / static_cast<double>(stats.size());
}

// ---------------------------------------------------------------------------
// Oracle
//
// Every binary tree with the samples as leaves is a recursive two-way split
// of the sample set. A tree is a valid encoding iff each node's sample set is
// laminar with every category (contained in it, containing it or disjoint):
// the lowest node containing a category must then equal it. The total code
// length of a subtree over S is |S| plus that of its two children, so the
// minimum decomposes over subsets. Optima are enumerated by expanding every
// minimum split in both child orders.

OracleResult oracle_optimal_encoding(std::span<const int> labels, std::size_t max_n) {
  const std::size_t n = labels.size();
  if (n == 0) throw std::invalid_argument("oracle: no samples");
  if (n > max_n) {
    throw std::invalid_argument("oracle: " + std::to_string(n) + " samples exceeds max_n=" + std::to_string(max_n));
  }
  if (n > 20) throw std::invalid_argument("oracle: subset search limited to 20 samples");

  using Mask = std::uint32_t;
  const Mask full = (Mask{1} << n) - 1;
  std::map<int, Mask> cats;
  for (std::size_t i = 0; i < n; ++i) cats[labels[i]] |= Mask{1} << i;

  std::vector<char> laminar(full + 1, 1);
  for (Mask s = 1; s <= full; ++s) {
    for (const auto& [_, c] : cats) {
      const Mask inter = s & c;
      if (inter != 0 && inter != s && inter != c) {
        laminar[s] = 0;
        break;
      }
    }
  }

  constexpr std::size_t kInf = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> best(full + 1, kInf);
  std::vector<std::vector<Mask>> splits(full + 1);  // left parts (holding the low bit) of optimal splits
  for (Mask s = 1; s <= full; ++s) {
    if (!laminar[s]) continue;
    if (std::popcount(s) == 1) {
      best[s] = 0;
      continue;
    }
    const Mask low = s & (~s + 1);
    for (Mask l = (s - 1) & s; l != 0; l = (l - 1) & s) {
      if (!(l & low)) continue;
      const Mask r = s ^ l;
      if (best[l] == kInf || best[r] == kInf) continue;
      const std::size_t cost = best[l] + best[r] + static_cast<std::size_t>(std::popcount(s));
      if (cost < best[s]) {
        best[s] = cost;
        splits[s].clear();
      }
      if (cost == best[s]) splits[s].push_back(l);
    }
  }

  std::unordered_map<Mask, std::vector<std::vector<std::string>>> memo;
  std::function<const std::vector<std::vector<std::string>>&(Mask)> expand =
      [&](Mask s) -> const std::vector<std::vector<std::string>>& {
    if (auto it = memo.find(s); it != memo.end()) return it->second;
    std::vector<std::vector<std::string>> out;
    if (std::popcount(s) == 1) {
      out.emplace_back(n);
    } else {
      for (Mask l : splits[s]) {
        const Mask r = s ^ l;
        const auto& left = expand(l);
        const auto& right = expand(r);
        for (const auto& a : left)
          for (const auto& b : right)
            for (int order = 0; order < 2; ++order) {
              std::vector<std::string> codes(n);
              const char la = order == 0 ? '0' : '1';
              const char rb = order == 0 ? '1' : '0';
              for (std::size_t i = 0; i < n; ++i) {
                if (l >> i & 1U) codes[i] = la + a[i];
                if (r >> i & 1U) codes[i] = rb + b[i];
              }
              out.push_back(std::move(codes));
            }
      }
    }
    return memo.emplace(s, std::move(out)).first->second;
  };

  OracleResult result;
  result.min_total_length = best[full];
  for (const auto& codes : expand(full)) result.optima.push_back(Encoding{codes});
  std::sort(result.optima.begin(), result.optima.end());
  return result;
}

bool depth_multiset_isomorphic(const CategoryTree& a, const CategoryTree& b) {
  return a.depth_multiset() == b.depth_multiset();
}

// ---------------------------------------------------------------------------
// Dumps

namespace {

std::string class_counts(const TreeNode& n, std::span<const int> labels) {
  std::map<int, std::size_t> counts;
  for (int s : n.descendants) ++counts[labels[static_cast<std::size_t>(s)]];
  std::string out;
  for (const auto& [c, k] : counts) {
    if (!out.empty()) out += ',';
    out += std::to_string(c) + ':' + std::to_string(k);
  }
  return out;
}

std::string join_ids(const std::vector<int>& ids) {
  std::string out;
  for (int s : ids) {
    if (!out.empty()) out += ',';
    out += std::to_string(s);
  }
  return out;
}

void check_dump_labels(const CategoryTree& t, std::span<const int> labels) {
  if (!labels.empty() && labels.size() != t.sample_count()) {
    throw std::invalid_argument("dump: labels do not cover the tree's samples");
  }
}

}  // namespace

std::string dump_text(const CategoryTree& t, std::span<const int> labels) {
  check_dump_labels(t, labels);
  std::ostringstream os;
  std::function<void(int)> visit = [&](int id) {
    const TreeNode& n = t.node(id);
    os << std::string(2 * n.path.size(), ' ') << (n.path.empty() ? "root" : n.path) << " n=" << n.descendants.size();
    if (!n.terminal.empty()) os << " samples=" << join_ids(n.terminal);
    if (!labels.empty()) os << " classes=" << class_counts(n, labels);
    os << '\n';
    if (n.left >= 0) visit(n.left);
    if (n.right >= 0) visit(n.right);
  };
  visit(0);
  return os.str();
}

std::string dump_dot(const CategoryTree& t, std::span<const int> labels) {
  check_dump_labels(t, labels);
  std::ostringstream os;
  os << "digraph category_tree {\n  node [shape=box];\n";
  for (std::size_t i = 0; i < t.nodes().size(); ++i) {
    const TreeNode& n = t.nodes()[i];
    os << "  n" << i << " [label=\"" << (n.path.empty() ? "root" : n.path) << "\\nn=" << n.descendants.size();
    if (!labels.empty()) os << "\\n" << class_counts(n, labels);
    os << "\"];\n";
  }
  for (std::size_t i = 0; i < t.nodes().size(); ++i) {
    const TreeNode& n = t.nodes()[i];
    if (n.left >= 0) os << "  n" << i << " -> n" << n.left << " [label=\"0\"];\n";
    if (n.right >= 0) os << "  n" << i << " -> n" << n.right << " [label=\"1\"];\n";
  }
  os << "}\n";
  return os.str();
}

LearnedTree summarize_codes(Encoding codes, std::span<const int> labels) {
  LearnedTree out;
  out.tree = trie_from_shared_codes(codes);
  out.stats = category_prefix_stats(codes, labels);
  out.mean_purity = mean_purity(out.stats);
  out.text = dump_text(out.tree, labels);
  out.dot = dump_dot(out.tree, labels);
  out.codes = std::move(codes);
  return out;
}

std::vector<int> dense_labels(std::span<const std::string> names) {
  std::map<std::string, int> ids;
  std::vector<int> out;
  out.reserve(names.size());
  for (const auto& name : names) {
    auto [it, _] = ids.try_emplace(name, static_cast<int>(ids.size()));
    out.push_back(it->second);
  }
  return out;
}

}  // namespace infosieve::tree
