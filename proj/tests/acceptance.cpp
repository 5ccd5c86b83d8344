// SPDX-License-Identifier: Apache-2.0
//
// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "infosieve/cli.hpp"
#include "infosieve/cluster.hpp"
#include "infosieve/codec.hpp"
#include "infosieve/losses.hpp"
#include "infosieve/model.hpp"
#include "infosieve/runner.hpp"
#include "infosieve/treelab.hpp"

using namespace infosieve;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, bool ok, const std::string& what, const std::string& detail) {
  std::printf("%s criterion %d: %s (%s)\n", ok ? "PASS" : "FAIL", id, what.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) m(i, j) = u(rng);
  return m;
}

// 1 ------------------------------------------------------------------------

void gradient_fidelity() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const Model m = Model::init({.input_dim = 6, .hidden = 8, .embed_dim = 4, .code_len = 5, .n_known = 2}, seed);
    BatchInput batch;
    batch.view1 = random_matrix(4, 6, rng, -1.0, 1.0);
    batch.view2 = random_matrix(4, 6, rng, -1.0, 1.0);
    batch.labels = {0, 0, 1, -1};
    batch.pseudo = {0, 0, 1, 2};
    const auto sched = codec::TrainSchedule::at(static_cast<int>(seed % 10), 10);
    const loss::LossWeights w;  // every term switched on
    const diff::LossFn fn = [&](const std::vector<diff::ParamStore>& blocks) {
      return batch_loss(blocks, batch, sched, w, true).grad;
    };
    worst = std::max(worst, diff::grad_check(fn, m.blocks, 1e-6));
  }
  const double secs = seconds_since(t0);
  report(1, worst < 1e-4 && secs < 30.0, "full-loss gradients match central differences",
         "max rel err " + fmt("%.2e", worst) + ", " + fmt("%.1f s", secs));
}

// 2 ------------------------------------------------------------------------

double ref_length(const Matrix& m, double base, double p) {
  double total = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < m.cols(); ++k) s += std::pow(std::abs(m(i, k)) * std::pow(base, k + 1.0), p);
    total += std::pow(s, 1.0 / p);
  }
  return total / static_cast<double>(m.rows());
}

double ref_cond(const Matrix& v) {
  double s = 0.0;
  for (std::size_t i = 0; i < v.rows(); ++i)
    for (std::size_t k = 0; k < v.cols(); ++k) {
      const double x = v(i, k);
      s += x * x * (1.0 - x) * (1.0 - x);
    }
  return s;
}

double ref_positional(const std::vector<double>& bits, const std::vector<double>& mask, double base) {
  double s = 0.0;
  for (std::size_t k = 0; k < bits.size(); ++k) s += bits[k] * mask[k] / std::pow(base, k + 1.0);
  return s;
}

double ref_final(const loss::LossParts& p, const loss::LossWeights& w) {
  const double c_in = (1.0 - w.lambda_in) * p.c_in_u + w.lambda_in * p.c_in_s;
  const double c_code = (1.0 - w.lambda_code) * p.c_code_u + w.lambda_code * p.c_code_s;
  return w.alpha * c_in + w.beta * c_code + w.delta * p.length + w.gamma * p.cat + w.zeta * p.code_cond +
         w.mu * p.mask_cond;
}

bool close(double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(b)); }

void formula_oracles() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int mismatches = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + t % 5, len = 1 + t % 16;
    const double base = 1.0 + u(rng), p = t % 2 ? 2.0 : 1.0;
    const Matrix m = random_matrix(n, len, rng, 0.0, 1.0);
    diff::Graph g;
    const diff::Var mv = g.constant(m);
    if (!close(loss::loss_length(mv, base, p).item(), ref_length(m, base, p))) ++mismatches;
    if (!close(loss::loss_code_cond(mv).item(), ref_cond(m))) ++mismatches;
    if (!close(loss::loss_mask_cond(mv).item(), ref_cond(m))) ++mismatches;

    std::vector<double> soft(len), mask(len);
    for (auto& v : soft) v = 2.0 * u(rng) - 1.0;
    for (auto& v : mask) v = u(rng);
    const auto code = codec::BinaryCode::from_soft(soft);
    const auto seq = codec::MaskSequence::from_soft(mask, base);
    if (!close(codec::positional_value(code, seq, base), ref_positional(code.bits, mask, base))) ++mismatches;

    loss::LossParts parts{u(rng) * 5, u(rng) * 5, u(rng) * 5, u(rng) * 5, u(rng) * 50, u(rng) * 3, u(rng), u(rng)};
    loss::LossWeights w;
    w.alpha = u(rng);
    w.beta = u(rng);
    w.delta = u(rng);
    w.gamma = u(rng);
    w.zeta = u(rng);
    w.mu = u(rng);
    w.lambda_in = u(rng);
    w.lambda_code = u(rng);
    if (!close(loss::loss_final(parts, w).total, ref_final(parts, w))) ++mismatches;
  }

  // A lone rightmost one outweighs everything before it, at base 2.
  int violations = 0;
  for (int t = 0; t < 10000; ++t) {
    const std::size_t len = 1 + t % 24;
    const double p = t % 2 ? 2.0 : 1.0;
    Matrix m(1, len);
    for (std::size_t k = 0; k < len; ++k) m(0, k) = u(rng) < 0.5 ? 1.0 : 0.0;
    std::size_t last = len;
    for (std::size_t k = 0; k < len; ++k)
      if (m(0, k) == 1.0) last = k;
    if (last == len) continue;
    Matrix lone(1, len), rest = m;
    lone(0, last) = 1.0;
    rest(0, last) = 0.0;
    diff::Graph g;
    const double a = loss::loss_length(g.constant(lone), 2.0, p).item();
    const double b = loss::loss_length(g.constant(rest), 2.0, p).item();
    if (!(a > b)) ++violations;
  }
  report(2, mismatches == 0 && violations == 0, "loss formulas match straight-line recomputation; rightmost-bit dominance",
         std::to_string(mismatches) + " mismatches in 5000 checks, " + std::to_string(violations) +
             " dominance violations in 10000 masks");
}

// 3 ------------------------------------------------------------------------

void hungarian_exact() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(7);
  int wrong = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + t % 6;
    const Matrix c = random_matrix(n, n, rng, -5.0, 5.0);
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = 1e300;
    do {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += c(i, static_cast<std::size_t>(perm[i]));
      best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    const cluster::Matching m = cluster::hungarian(c);
    double s = 0.0;
    std::vector<bool> used(n, false);
    bool perm_ok = true;
    for (std::size_t i = 0; i < n; ++i) {
      const int j = m.row_to_col[i];
      if (j < 0 || used[static_cast<std::size_t>(j)]) {
        perm_ok = false;
        break;
      }
      used[static_cast<std::size_t>(j)] = true;
      s += c(i, static_cast<std::size_t>(j));
    }
    if (!perm_ok || std::abs(s - best) > 1e-9 || std::abs(m.cost - best) > 1e-9) ++wrong;
  }
  const double secs = seconds_since(t0);
  report(3, wrong == 0 && secs < 10.0, "Hungarian equals exhaustive optimum for n <= 6",
         std::to_string(wrong) + "/1000 wrong, " + fmt("%.2f s", secs));
}

// 4 ------------------------------------------------------------------------

void semi_supervised_kmeans() {
  std::mt19937_64 rng(11);
  int moved = 0, rising = 0, out_of_band = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t c = 2 + t % 3, k = c + t % 3, n = 20 + t % 31, d = 2 + t % 4;
    const Matrix x = random_matrix(n, d, rng, -3.0, 3.0);
    cluster::Anchors labeled;
    for (std::size_t cls = 0; cls < c; ++cls) labeled[cls] = static_cast<int>(cls);
    for (std::size_t i = c; i < n; ++i)
      if (rng() % 4 == 0) labeled[i] = static_cast<int>(rng() % c);

    const auto ss = cluster::ss_kmeans(x, labeled, k, rng());
    for (const auto& [i, cls] : labeled)
      if (ss.assign[i] != cls) ++moved;
    for (std::size_t s = 1; s < ss.history.size(); ++s)
      if (ss.history[s] > ss.history[s - 1] * (1.0 + 1e-12) + 1e-12) ++rising;

    const auto bal = cluster::balanced_kmeans(x, k, rng());
    std::vector<std::size_t> sizes(k, 0);
    for (int a : bal.assign) ++sizes[static_cast<std::size_t>(a)];
    const std::size_t lo = n / k, hi = (n + k - 1) / k;
    for (std::size_t s : sizes)
      if (s < lo || s > hi) ++out_of_band;
  }
  report(4, moved == 0 && rising == 0 && out_of_band == 0,
         "labeled points stay pinned, objective nonincreasing, balanced sizes in band",
         std::to_string(moved) + " moved, " + std::to_string(rising) + " increases, " + std::to_string(out_of_band) +
             " sizes out of band");
}

// 5 ------------------------------------------------------------------------

// Random full binary tree over the given samples; codes are the leaf paths.
void random_tree(std::vector<int> samples, const std::string& path, std::mt19937_64& rng,
                 std::vector<std::string>& codes) {
  if (samples.size() == 1) {
    codes[static_cast<std::size_t>(samples[0])] = path;
    return;
  }
  std::shuffle(samples.begin(), samples.end(), rng);
  const std::size_t cut = 1 + rng() % (samples.size() - 1);
  random_tree({samples.begin(), samples.begin() + static_cast<long>(cut)}, path + "0", rng, codes);
  random_tree({samples.begin() + static_cast<long>(cut), samples.end()}, path + "1", rng, codes);
}

std::size_t total_length(const tree::Encoding& e) {
  std::size_t s = 0;
  for (const auto& c : e.codes) s += c.size();
  return s;
}

void tree_oracle() {
  const auto t0 = Clock::now();
  const std::vector<int> aabb = {0, 0, 1, 1};
  const tree::OracleResult r = tree::oracle_optimal_encoding(aabb);
  bool prefixes_ok = !r.optima.empty(), depths_ok = true;
  for (const auto& enc : r.optima) {
    for (const auto& st : tree::category_prefix_stats(enc, aabb))
      if (st.prefix.size() != 1 || st.purity != 1.0) prefixes_ok = false;
    if (!tree::depth_multiset_isomorphic(tree::trie_from_codes(enc), tree::trie_from_codes(r.optima.front())))
      depths_ok = false;
  }

  // Random valid encodings never beat the exhaustive optimum.
  std::mt19937_64 rng(5);
  int below = 0, sampled = 0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = t < 20 ? 4 : 2 + t % 7;
    std::vector<int> labels = t < 20 ? aabb : std::vector<int>(n);
    if (t >= 20)
      for (auto& l : labels) l = static_cast<int>(rng() % 3);
    const std::size_t best = t < 20 ? r.min_total_length : tree::oracle_optimal_encoding(labels).min_total_length;
    std::vector<int> ids(n);
    std::iota(ids.begin(), ids.end(), 0);
    for (int s = 0; s < 200; ++s) {
      tree::Encoding enc;
      enc.codes.assign(n, "");
      random_tree(ids, "", rng, enc.codes);
      if (!tree::is_valid_encoding(enc, labels).valid) continue;
      ++sampled;
      if (total_length(enc) < best) ++below;
    }
  }
  const double secs = seconds_since(t0);
  report(5, r.min_total_length == 8 && prefixes_ok && depths_ok && below == 0 && secs < 60.0,
         "tree oracle on A,A,B,B and random valid encodings",
         "min " + std::to_string(r.min_total_length) + ", " + std::to_string(r.optima.size()) + " optima, " +
             std::to_string(below) + "/" + std::to_string(sampled) + " sampled encodings below optimum, " +
             fmt("%.1f s", secs));
}

// 6-8 ----------------------------------------------------------------------

void end_to_end() {
  RunConfig cfg;  // depth 3, 20 per leaf, dim 64, noise 0.05, seed 0, 60 epochs, batch 32
  const auto t0 = Clock::now();
  const Experiment ex = prepare(cfg);
  const RunResult r = train(cfg, ex);
  const double secs = seconds_since(t0);

  const double bin = 0.5 * (r.binarization.code + r.binarization.mask);
  report(6, r.binarization.code < 0.01 && r.binarization.mask < 0.01, "codes and masks saturate to binary",
         "code " + fmt("%.4f", r.binarization.code) + ", mask " + fmt("%.4f", r.binarization.mask) + ", mean " +
             fmt("%.4f", bin));

  const auto& m = r.metrics.code;
  report(7,
         ex.n_classes == 8 && ex.split.known_classes.size() == 4 && m.acc_all >= 0.90 && m.acc_novel >= 0.85 &&
             m.acc_all > r.metrics.baseline.acc_all && secs < 300.0,
         "synthetic discovery beats k-means",
         "all " + fmt("%.4f", m.acc_all) + ", novel " + fmt("%.4f", m.acc_novel) + ", baseline " +
             fmt("%.4f", r.metrics.baseline.acc_all) + ", " + fmt("%.1f s", secs));

  const Model untrained = Model::init({.input_dim = ex.dataset.dim(), .hidden = cfg.hidden, .embed_dim = cfg.embed_dim,
                                       .code_len = cfg.code_len, .n_known = ex.split.known_classes.size()},
                                      cfg.seed);
  const double before = extract_learned_tree(untrained, ex.dataset, schedule_after(cfg.n_epochs, cfg)).mean_purity;
  report(8, r.tree.mean_purity >= 0.9 && before <= 0.5, "learned tree has pure category prefixes",
         "trained " + fmt("%.4f", r.tree.mean_purity) + ", untrained " + fmt("%.4f", before));
}

// 9 ------------------------------------------------------------------------

void ablation_shape() {
  const auto rows = leave_one_out_rows();
  std::vector<std::vector<double>> acc(rows.size());
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    RunConfig cfg;
    cfg.seed = seed;
    const auto out = ablate(cfg, rows);
    for (std::size_t i = 0; i < out.size(); ++i) acc[i].push_back(out[i].result.metrics.code.acc_all);
  }
  auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
  const double full = mean(acc[0]);
  double var = 0.0;
  for (double a : acc[0]) var += (a - full) * (a - full);
  const double tol = std::max(0.01, std::sqrt(var / acc[0].size()));

  bool ok = true;
  std::ostringstream detail;
  detail << "full " << fmt("%.4f", full) << ", tol " << fmt("%.4f", tol);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double v = mean(acc[i]);
    if (full < v - tol) ok = false;
    detail << ", -" << *rows[i].begin() << " " << fmt("%.4f", v);
  }
  report(9, ok, "full model is not beaten by any leave-one-out variant", detail.str());
}

// 10 -----------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void determinism() {
  const fs::path root = fs::temp_directory_path() / "infosieve_acceptance_det";
  fs::remove_all(root);
  std::ostringstream sink;
  int rc = 0;
  for (const char* run : {"a", "b"})
    rc |= cli::run({"train", "--deterministic", "--seed", "0", "--out", (root / run).string()}, sink, sink);
  int differing = 0;
  const std::vector<std::string> files = {"final_metrics.json", "metrics.jsonl", "summary.csv", "tree.txt", "tree.dot"};
  for (const auto& f : files) {
    const std::string a = slurp(root / "a" / f), b = slurp(root / "b" / f);
    if (a.empty() || a != b) ++differing;
  }
  fs::remove_all(root);
  report(10, rc == 0 && differing == 0, "deterministic runs give byte-identical metrics files",
         std::to_string(files.size() - static_cast<std::size_t>(differing)) + "/" + std::to_string(files.size()) +
             " identical");
}

}  // namespace

int main() {
  const std::vector<std::function<void()>> checks = {gradient_fidelity, formula_oracles, hungarian_exact,
                                                     semi_supervised_kmeans, tree_oracle, end_to_end,
                                                     ablation_shape, determinism};
  for (const auto& check : checks) {
    try {
      check();
    } catch (const std::exception& e) {
      std::printf("FAIL unexpected exception: %s\n", e.what());
      ++failures;
    }
  }
  return failures == 0 ? 0 : 1;
}
