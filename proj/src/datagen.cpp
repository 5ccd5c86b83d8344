// SPDX-License-Identifier: Apache-2.0

#include "infosieve/datagen.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace infosieve::data {

std::vector<int> HierDataset::classes() const {
  std::set<int> s(labels.begin(), labels.end());
  return {s.begin(), s.end()};
}

bool GcdSplit::is_known(int category) const {
  return std::binary_search(known_classes.begin(), known_classes.end(), category);
}

HierDataset gen_hier_dataset(const HierParams& p) {
  if (p.depth < 1) throw std::invalid_argument("gen_hier_dataset: depth must be >= 1");
  if (p.per_leaf < 1) throw std::invalid_argument("gen_hier_dataset: per_leaf must be >= 1");
  if (p.dim < p.depth) throw std::invalid_argument("gen_hier_dataset: dim must be >= depth");
  if (p.depth > 20) throw std::invalid_argument("gen_hier_dataset: depth too large");
  if (!(p.noise_sigma >= 0.0)) throw std::invalid_argument("gen_hier_dataset: noise_sigma must be >= 0");

  std::mt19937_64 rng(p.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto dim = static_cast<std::size_t>(p.dim);

  // Heap-ordered complete tree: node k has children 2k+1, 2k+2.
  const std::size_t n_nodes = (std::size_t{1} << (p.depth + 1)) - 1;
  std::vector<std::vector<double>> node_vec(n_nodes, std::vector<double>(dim));
  for (std::size_t k = 0; k < n_nodes; ++k) {
    const int level = std::bit_width(k + 1) - 1;
    double norm = 0.0;
    for (double& v : node_vec[k]) {
      v = normal(rng);
      norm += v * v;
    }
    const double scale = std::pow(p.level_scale, level) / std::sqrt(norm);
    for (double& v : node_vec[k]) v *= scale;
  }

  const std::size_t n_leaves = std::size_t{1} << p.depth;
  const auto per_leaf = static_cast<std::size_t>(p.per_leaf);
  HierDataset ds;
  ds.seed = p.seed;
  ds.noise_sigma = p.noise_sigma;
  ds.features = Matrix(n_leaves * per_leaf, dim);
  tree::Encoding cat_codes;
  std::normal_distribution<double> noise(0.0, p.noise_sigma);
  for (std::size_t leaf = 0; leaf < n_leaves; ++leaf) {
    std::vector<double> mean(dim, 0.0);
    std::string path;
    std::size_t k = 0;
    for (int level = 0;; ++level) {
      for (std::size_t j = 0; j < dim; ++j) mean[j] += node_vec[k][j];
      if (level == p.depth) break;
      const bool right = (leaf >> (p.depth - 1 - level)) & 1U;
      path += right ? '1' : '0';
      k = 2 * k + (right ? 2 : 1);
    }
    ds.category_paths.push_back(path);
    cat_codes.codes.push_back(path);
    for (std::size_t s = 0; s < per_leaf; ++s) {
      const std::size_t row = leaf * per_leaf + s;
      for (std::size_t j = 0; j < dim; ++j) {
        ds.features(row, j) = mean[j] + (p.noise_sigma > 0.0 ? noise(rng) : 0.0);
      }
      ds.labels.push_back(static_cast<int>(leaf));
      ds.ids.push_back(static_cast<long long>(row));
    }
  }
  ds.gt_tree = tree::trie_from_codes(cat_codes);
  return ds;
}

GcdSplit gcd_split(const HierDataset& ds, double known_class_frac, double labeled_frac, std::uint64_t seed) {
  if (!(known_class_frac > 0.0 && known_class_frac <= 1.0) || !(labeled_frac > 0.0 && labeled_frac <= 1.0)) {
    throw std::invalid_argument("gcd_split: fractions must lie in (0, 1]");
  }
  std::mt19937_64 rng(seed);
  std::vector<int> classes = ds.classes();
  const auto n_known = static_cast<std::size_t>(std::floor(known_class_frac * static_cast<double>(classes.size()) + 1e-9));
  if (n_known == 0) throw std::invalid_argument("gcd_split: no known classes after rounding");

  std::shuffle(classes.begin(), classes.end(), rng);
  GcdSplit split;
  split.known_classes.assign(classes.begin(), classes.begin() + static_cast<std::ptrdiff_t>(n_known));
  std::sort(split.known_classes.begin(), split.known_classes.end());

  std::vector<char> labeled(ds.size(), 0);
  for (int c : split.known_classes) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (ds.labels[i] == c) members.push_back(i);
    const auto n_lab = static_cast<std::size_t>(std::floor(labeled_frac * static_cast<double>(members.size()) + 1e-9));
    if (n_lab == 0) {
      throw std::invalid_argument("gcd_split: known class " + std::to_string(c) + " has no labeled samples");
    }
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t k = 0; k < n_lab; ++k) labeled[members[k]] = 1;
  }
  for (std::size_t i = 0; i < ds.size(); ++i) (labeled[i] ? split.labeled_idx : split.unlabeled_idx).push_back(i);
  if (split.unlabeled_idx.empty()) {
    throw std::invalid_argument("gcd_split: every sample is labeled, no discovery task");
  }
  return split;
}

std::vector<double> augment(std::span<const double> x, std::mt19937_64& rng, double sigma_aug, double drop_frac) {
  if (!(drop_frac >= 0.0 && drop_frac < 1.0)) throw std::invalid_argument("augment: drop_frac must be in [0, 1)");
  std::vector<double> out(x.begin(), x.end());
  if (sigma_aug > 0.0) {
    std::normal_distribution<double> noise(0.0, sigma_aug);
    for (double& v : out) v += noise(rng);
  }
  const auto n_drop = static_cast<std::size_t>(std::llround(drop_frac * static_cast<double>(out.size())));
  if (n_drop > 0) {
    std::vector<std::size_t> idx(out.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // Partial Fisher-Yates: the first n_drop slots are a uniform sample.
    for (std::size_t k = 0; k < n_drop; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, idx.size() - 1);
      std::swap(idx[k], idx[pick(rng)]);
      out[idx[k]] = 0.0;
    }
  }
  return out;
}

std::vector<double> augment(std::span<const double> x, std::uint64_t seed, double sigma_aug, double drop_frac) {
  std::mt19937_64 rng(seed);
  return augment(x, rng, sigma_aug, drop_frac);
}

// ---------------------------------------------------------------------------
// Embedding file

namespace {

[[noreturn]] void parse_error(std::size_t line, const std::string& what) {
  throw std::runtime_error("embedding file line " + std::to_string(line) + ": " + what);
}

template <class T>
T parse_number(std::string_view field, std::size_t line) {
  T value{};
  // Skip leading blanks; from_chars does not.
  while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) field.remove_suffix(1);
  if constexpr (std::is_floating_point_v<T>) {
    // strtod for portability of the floating-point grammar.
    std::string s(field);
    char* end = nullptr;
    value = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) parse_error(line, "bad number '" + s + "'");
  } else {
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size()) {
      parse_error(line, "bad integer '" + std::string(field) + "'");
    }
  }
  return value;
}

}  // namespace

HierDataset parse_embeddings(const std::string& text) {
  std::istringstream in(text);
  std::string header;
  if (!std::getline(in, header) || header.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw std::runtime_error("embedding file is empty");
  }
  std::istringstream hs(header);
  std::string magic, version;
  long long n = -1, d = -1;
  hs >> magic >> version >> n >> d;
  if (magic != "emb") parse_error(1, "expected header 'emb v1 <N> <D>'");
  if (version != "v1") parse_error(1, "unsupported version '" + version + "'");
  if (!hs || n <= 0 || d <= 0) parse_error(1, "header needs positive N and D");

  HierDataset ds;
  ds.features = Matrix(static_cast<std::size_t>(n), static_cast<std::size_t>(d));
  std::string row;
  std::size_t line = 1;
  std::size_t r = 0;
  while (std::getline(in, row)) {
    ++line;
    if (row.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (r == static_cast<std::size_t>(n)) parse_error(line, "more rows than the declared " + std::to_string(n));
    std::vector<std::string_view> fields;
    std::string_view rest(row);
    for (;;) {
      const auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (fields.size() != static_cast<std::size_t>(d) + 2) {
      parse_error(line, "expected " + std::to_string(d + 2) + " fields, got " + std::to_string(fields.size()));
    }
    ds.ids.push_back(parse_number<long long>(fields[0], line));
    ds.labels.push_back(parse_number<int>(fields[1], line));
    for (std::size_t j = 0; j < static_cast<std::size_t>(d); ++j) {
      const double v = parse_number<double>(fields[j + 2], line);
      if (!std::isfinite(v)) parse_error(line, "non-finite feature");
      ds.features(r, j) = v;
    }
    ++r;
  }
  if (r != static_cast<std::size_t>(n)) {
    throw std::runtime_error("embedding file declares " + std::to_string(n) + " rows but has " + std::to_string(r));
  }
  return ds;
}

HierDataset load_embedding_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open embedding file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_embeddings(buf.str());
}

std::string format_embeddings(const HierDataset& ds) {
  std::string out = "emb v1 " + std::to_string(ds.size()) + " " + std::to_string(ds.dim()) + "\n";
  char num[32];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out += std::to_string(i < ds.ids.size() ? ds.ids[i] : static_cast<long long>(i));
    out += ',';
    out += std::to_string(ds.labels[i]);
    for (std::size_t j = 0; j < ds.dim(); ++j) {
      std::snprintf(num, sizeof num, "%.17g", ds.features(i, j));
      out += ',';
      out += num;
    }
    out += '\n';
  }
  return out;
}

void save_embedding_file(const HierDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write embedding file " + path.string());
  out << format_embeddings(ds);
}

}  // namespace infosieve::data
