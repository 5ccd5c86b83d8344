// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "infosieve/losses.hpp"

using namespace infosieve;
using namespace infosieve::loss;
using diff::Graph;
using diff::Var;

namespace {

using Rows = std::vector<std::vector<double>>;

Matrix to_matrix(const Rows& r) {
  Matrix m(r.size(), r.front().size());
  for (std::size_t i = 0; i < r.size(); ++i)
    for (std::size_t j = 0; j < r[i].size(); ++j) m(i, j) = r[i][j];
  return m;
}

Rows random_rows(std::size_t n, std::size_t d, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Rows r(n, std::vector<double>(d));
  for (auto& row : r)
    for (double& v : row) v = g(rng);
  return r;
}

double euclid(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

// Cross-entropy of one score row against a target distribution.
double row_ce(const std::vector<double>& scores, const std::vector<double>& target) {
  const double mx = *std::max_element(scores.begin(), scores.end());
  double z = 0.0;
  for (double s : scores) z += std::exp(s - mx);
  const double lse = mx + std::log(z);
  double ce = 0.0;
  for (std::size_t j = 0; j < scores.size(); ++j) ce += target[j] * (lse - scores[j]);
  return ce;
}

double oracle_unsup(const Rows& a, const Rows& b, double tau, double sm) {
  const std::size_t n = a.size();
  double total = 0.0;
  for (int dir = 0; dir < 2; ++dir) {
    const Rows& p = dir ? b : a;
    const Rows& q = dir ? a : b;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> s(n), t(n, sm / n);
      for (std::size_t j = 0; j < n; ++j) s[j] = -euclid(p[i], q[j]) / tau;
      t[i] += 1.0 - sm;
      total += row_ce(s, t);
    }
  }
  return total / (2.0 * n);
}

double oracle_sup(const Rows& e, const std::vector<int>& labels, double tau, double sm) {
  const std::size_t n = e.size();
  double total = 0.0;
  int anchors = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto pos = std::count(labels.begin(), labels.end(), labels[i]);
    if (pos < 2) continue;
    ++anchors;
    std::vector<double> s(n), t(n);
    for (std::size_t j = 0; j < n; ++j) {
      s[j] = -euclid(e[i], e[j]) / tau;
      t[j] = sm / n + (labels[j] == labels[i] ? (1.0 - sm) / pos : 0.0);
    }
    total += row_ce(s, t);
  }
  return anchors ? total / anchors : 0.0;
}

double oracle_length(const Rows& m, double base, double p) {
  double total = 0.0;
  for (const auto& row : m) {
    double s = 0.0;
    for (std::size_t k = 0; k < row.size(); ++k) s += std::pow(row[k] * std::pow(base, k + 1.0), p);
    total += std::pow(s, 1.0 / p);
  }
  return total / m.size();
}

double oracle_cond(const Rows& v) {
  double s = 0.0;
  for (const auto& row : v)
    for (double x : row) s += x * x * (1 - x) * (1 - x);
  return s;
}

double oracle_cat(const Rows& logits, const std::vector<int>& labels) {
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    std::vector<double> t(logits[i].size(), 0.0);
    t[static_cast<std::size_t>(labels[i])] = 1.0;
    s += row_ce(logits[i], t);
  }
  return s / logits.size();
}

double unsup(const Rows& a, const Rows& b, double tau, double sm = 0.0) {
  Graph g;
  return info_nce_unsup(g.constant(to_matrix(a)), g.constant(to_matrix(b)), tau, sm).item();
}

double sup(const Rows& e, const std::vector<int>& labels, double tau, double sm = 0.0) {
  Graph g;
  return info_nce_sup(g.constant(to_matrix(e)), labels, tau, sm).loss.item();
}

double length(const Rows& m, double base, double p) {
  Graph g;
  return loss_length(g.constant(to_matrix(m)), base, p).item();
}

}  // namespace

TEST_CASE("weights validate") {
  CHECK_NOTHROW(LossWeights{}.validate());
  LossWeights w;
  w.delta = -1.0;
  CHECK_THROWS_WITH(w.validate(), doctest::Contains("delta"));
  w = {};
  w.tau = 0.0;
  CHECK_THROWS_WITH(w.validate(), doctest::Contains("tau"));
  w = {};
  w.p = 0.5;
  CHECK_THROWS_AS(w.validate(), std::invalid_argument);
  w = {};
  w.lambda_code = 1.5;
  CHECK_THROWS_AS(w.validate(), std::invalid_argument);
  w = {};
  w.smoothing = -0.1;
  CHECK_THROWS_AS(w.validate(), std::invalid_argument);
}

TEST_CASE("unsupervised InfoNCE on an identical batch is log B") {
  for (std::size_t b : {2U, 3U, 7U}) {
    const Rows e(b, std::vector<double>{0.3, -1.2});
    CHECK(unsup(e, e, 0.1) == doctest::Approx(std::log(static_cast<double>(b))));
  }
}

TEST_CASE("unsupervised InfoNCE tends to zero with far negatives") {
  const Rows e{{0.0}, {1e3}, {2e3}};
  CHECK(unsup(e, e, 1.0) < 1e-12);
}

TEST_CASE("unsupervised InfoNCE on three scalars matches a hand-built score matrix") {
  const Rows e{{0.0}, {0.1}, {5.0}};
  // Row i scores -|x_i - x_j|; both directions are equal here.
  const double r0 = std::log(1 + std::exp(-0.1) + std::exp(-5.0));
  const double r1 = std::log(std::exp(-0.1) + 1 + std::exp(-4.9));
  const double r2 = std::log(std::exp(-5.0) + std::exp(-4.9) + 1);
  CHECK(unsup(e, e, 1.0) == doctest::Approx((r0 + r1 + r2) / 3.0).epsilon(1e-12));
}

TEST_CASE("unsupervised InfoNCE matches the straight-line oracle") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 2 + t % 6, d = 1 + t % 4;
    const Rows a = random_rows(n, d, rng), b = random_rows(n, d, rng);
    const double tau = 0.05 + 0.1 * (t % 5), sm = (t % 3) * 0.1;
    CHECK(unsup(a, b, tau, sm) == doctest::Approx(oracle_unsup(a, b, tau, sm)).epsilon(1e-10));
  }
}

TEST_CASE("unsupervised InfoNCE rejects bad input") {
  Graph g;
  CHECK_THROWS_WITH(info_nce_unsup(g.constant(Matrix(1, 2)), g.constant(Matrix(1, 2)), 0.1, 0.0),
                    doctest::Contains("no negatives"));
  CHECK_THROWS_AS(info_nce_unsup(g.constant(Matrix(3, 2)), g.constant(Matrix(3, 3)), 0.1, 0.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(info_nce_unsup(g.constant(Matrix(3, 2)), g.constant(Matrix(3, 2)), 0.0, 0.0),
                  std::invalid_argument);
}

TEST_CASE("supervised InfoNCE: one label, identical rows equals the identical-batch value") {
  const Rows e(5, std::vector<double>{1.0, 2.0});
  CHECK(sup(e, {3, 3, 3, 3, 3}, 0.1) == doctest::Approx(unsup(e, e, 0.1)));
}

TEST_CASE("supervised InfoNCE: two tight clusters approach log 2 from above") {
  double prev = 1e9;
  for (double d : {0.1, 0.5, 1.0, 3.0, 10.0}) {
    const Rows e{{0.0}, {0.0}, {d}, {d}};
    const double v = sup(e, {0, 0, 1, 1}, 1.0);
    CHECK(v == doctest::Approx(std::log(2.0 + 2.0 * std::exp(-d))));
    CHECK(v < prev);
    prev = v;
  }
  CHECK(prev == doctest::Approx(std::log(2.0)).epsilon(1e-4));
}

TEST_CASE("supervised InfoNCE with only singleton labels is flagged and zero") {
  Graph g;
  const SupervisedTerm t = info_nce_sup(g.constant(Matrix(3, 2, 1.0)), std::vector<int>{0, 1, 2}, 0.1, 0.0);
  CHECK(t.vacuous);
  CHECK(t.loss.item() == 0.0);
  CHECK_THROWS_AS(info_nce_sup(g.constant(Matrix(3, 2)), std::vector<int>{0, 1}, 0.1, 0.0), std::invalid_argument);
}

TEST_CASE("supervised InfoNCE matches the straight-line oracle") {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> lab(0, 3);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 2 + t % 7;
    const Rows e = random_rows(n, 3, rng);
    std::vector<int> labels(n);
    for (int& l : labels) l = lab(rng);
    const double sm = (t % 2) * 0.2;
    CHECK(sup(e, labels, 0.2, sm) == doctest::Approx(oracle_sup(e, labels, 0.2, sm)).epsilon(1e-10));
  }
}

TEST_CASE("contrastive losses ignore batch order") {
  std::mt19937_64 rng(4);
  const Rows a = random_rows(6, 3, rng), b = random_rows(6, 3, rng);
  const std::vector<int> labels{0, 1, 0, 2, 1, 1};
  std::vector<std::size_t> perm(6);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Rows pa, pb;
  std::vector<int> pl;
  for (auto i : perm) {
    pa.push_back(a[i]);
    pb.push_back(b[i]);
    pl.push_back(labels[i]);
  }
  CHECK(unsup(pa, pb, 0.1) == doctest::Approx(unsup(a, b, 0.1)).epsilon(1e-12));
  CHECK(sup(pa, pl, 0.1) == doctest::Approx(sup(a, labels, 0.1)).epsilon(1e-12));
}

TEST_CASE("feature contrastive term mixes exactly") {
  std::mt19937_64 rng(6);
  const Rows a = random_rows(6, 4, rng), b = random_rows(6, 4, rng);
  const std::vector<int> labels{0, -1, 1, 0, -1, 1};
  Rows labeled;
  std::vector<int> ll;
  for (int view = 0; view < 2; ++view)
    for (std::size_t i = 0; i < 6; ++i)
      if (labels[i] >= 0) {
        labeled.push_back(view ? b[i] : a[i]);
        ll.push_back(labels[i]);
      }
  const double u = oracle_unsup(a, b, 0.1, 0.0), s = oracle_sup(labeled, ll, 0.1, 0.0);
  for (double lambda : {0.0, 0.35, 1.0}) {
    LossWeights w;
    w.lambda_in = lambda;
    Graph g;
    const ContrastiveTerm t = loss_c_in(g.constant(to_matrix(a)), g.constant(to_matrix(b)), labels, w);
    CHECK(t.unsup.item() == doctest::Approx(u).epsilon(1e-12));
    CHECK(t.sup.loss.item() == doctest::Approx(s).epsilon(1e-12));
    CHECK(t.mixed.item() == doctest::Approx((1 - lambda) * u + lambda * s).epsilon(1e-12));
  }
  LossWeights w;
  Graph g;
  const ContrastiveTerm none =
      loss_c_in(g.constant(to_matrix(a)), g.constant(to_matrix(b)), std::vector<int>(6, -1), w);
  CHECK(none.sup.vacuous);
}

TEST_CASE("code contrastive term: raw bits unsupervised, truncated codes supervised") {
  std::mt19937_64 rng(7);
  const Rows b1 = random_rows(5, 6, rng), b2 = random_rows(5, 6, rng);
  const Rows t1 = random_rows(5, 6, rng), t2 = random_rows(5, 6, rng);
  const std::vector<int> truth{0, 0, 1, 1, 2};
  Rows both = t1;
  both.insert(both.end(), t2.begin(), t2.end());
  std::vector<int> both_labels = truth;
  both_labels.insert(both_labels.end(), truth.begin(), truth.end());
  LossWeights w;
  Graph g;
  const ContrastiveTerm t = loss_c_code(g.constant(to_matrix(b1)), g.constant(to_matrix(b2)),
                                        g.constant(to_matrix(t1)), g.constant(to_matrix(t2)), truth, w);
  CHECK(t.unsup.item() == doctest::Approx(oracle_unsup(b1, b2, w.tau, 0.0)).epsilon(1e-12));
  CHECK(t.sup.loss.item() == doctest::Approx(oracle_sup(both, both_labels, w.tau, 0.0)).epsilon(1e-12));
  CHECK(t.mixed.item() == doctest::Approx(0.65 * t.unsup.item() + 0.35 * t.sup.loss.item()).epsilon(1e-12));

  w.lambda_code = 0.0;
  Graph g2;
  const ContrastiveTerm pure = loss_c_code(g2.constant(to_matrix(b1)), g2.constant(to_matrix(b2)),
                                           g2.constant(to_matrix(t1)), g2.constant(to_matrix(t2)), truth, w);
  CHECK(pure.mixed.item() == doctest::Approx(pure.unsup.item()).epsilon(1e-14));
}

TEST_CASE("length loss examples") {
  CHECK(length({{0, 0, 0, 0}}, 2.0, 1.0) == 0.0);
  CHECK(length({{1, 1, 0, 0}}, 2.0, 1.0) == doctest::Approx(6.0));
  CHECK(length({{0, 0, 0, 0, 1}}, 2.0, 1.0) > length({{1, 1, 1, 1, 0}}, 2.0, 1.0));
  CHECK(length({{0, 0, 0, 0, 1}}, 2.0, 1.0) == doctest::Approx(32.0));
  CHECK(length({{1, 1, 1, 1, 0}}, 2.0, 1.0) == doctest::Approx(30.0));
  Graph g;
  CHECK_THROWS_AS(loss_length(g.constant(Matrix(1, 2)), 2.0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(loss_length(g.constant(Matrix(1, 2)), 3.0, 1.0), std::invalid_argument);
}

TEST_CASE("length loss matches the oracle and grows when a bit is switched on") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + t % 4, len = 1 + t % 12;
    Rows m(n, std::vector<double>(len));
    for (auto& r : m)
      for (double& v : r) v = u(rng) < 0.5 ? 0.0 : u(rng);
    const double base = 1.0 + u(rng), p = t % 2 ? 2.0 : 1.0;
    const double v = length(m, base, p);
    CHECK(v == doctest::Approx(oracle_length(m, base, p)).epsilon(1e-12));
    Rows more = m;
    more[0][t % len] = 1.0;
    if (m[0][t % len] <= 1.0) CHECK(length(more, base, p) >= v);
  }
}

TEST_CASE("condition losses") {
  Graph g;
  CHECK(loss_code_cond(g.constant(Matrix{{0, 1, 1, 0}})).item() == 0.0);
  CHECK(loss_mask_cond(g.constant(Matrix(1, 12, 0.5))).item() == doctest::Approx(12.0 / 16.0));
  CHECK(loss_code_cond(g.constant(Matrix{{0.9}})).item() == doctest::Approx(0.0081));
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(1e-6, 1.0 - 1e-6);
  for (int t = 0; t < 50; ++t) {
    Rows v(3, std::vector<double>(4));
    for (auto& r : v)
      for (double& x : r) x = u(rng);
    Graph h;
    const double got = loss_code_cond(h.constant(to_matrix(v))).item();
    CHECK(got > 0.0);
    CHECK(got == doctest::Approx(oracle_cond(v)).epsilon(1e-12));
  }
}

TEST_CASE("categorizer cross-entropy") {
  Graph g;
  CHECK(loss_cat(g.constant(Matrix(2, 5, 0.7)), std::vector<int>{0, 4}).item() == doctest::Approx(std::log(5.0)));
  CHECK(loss_cat(g.constant(Matrix{{60, 0, 0}, {0, 60, 0}}), std::vector<int>{0, 1}).item() < 1e-20);
  // log(e^1 + e^2 + e^3) - 2
  CHECK(loss_cat(g.constant(Matrix{{1, 2, 3}}), std::vector<int>{1}).item() ==
        doctest::Approx(std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0)) - 2.0));
  const Rows logits{{0.2, -1.0, 3.0}, {1.5, 1.5, 0.0}, {-2.0, 0.1, 0.4}};
  const std::vector<int> labels{2, 0, 1};
  CHECK(loss_cat(g.constant(to_matrix(logits)), labels).item() ==
        doctest::Approx(oracle_cat(logits, labels)).epsilon(1e-12));
  CHECK_THROWS_WITH(loss_cat(g.constant(Matrix(2, 3)), std::vector<int>{0, -1}), doctest::Contains("unlabeled"));
  CHECK_THROWS_AS(loss_cat(g.constant(Matrix(1, 3)), std::vector<int>{3}), std::invalid_argument);
}

TEST_CASE("final combination") {
  const LossParts ones{1, 1, 1, 1, 1, 1, 1, 1};
  CHECK(loss_final(ones, LossWeights{}).total == doctest::Approx(2.13).epsilon(1e-12));
  CHECK(loss_final(LossParts{}, LossWeights{}).total == 0.0);

  LossWeights w;
  w.gamma = 0.0;
  LossParts parts = ones;
  parts.cat = 1e6;
  CHECK(loss_final(parts, w).total == doctest::Approx(2.12).epsilon(1e-12));

  parts = ones;
  parts.length = std::nan("");
  CHECK_THROWS_WITH_AS(loss_final(parts, LossWeights{}), doctest::Contains("length"), diff::NonFiniteError);

  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int t = 0; t < 100; ++t) {
    const LossParts p{u(rng), u(rng), u(rng), u(rng), u(rng), u(rng), u(rng), u(rng)};
    LossWeights r;
    r.alpha = u(rng);
    r.beta = u(rng);
    r.delta = u(rng);
    r.gamma = u(rng);
    r.zeta = u(rng);
    r.mu = u(rng);
    r.lambda_in = u(rng) / 3;
    r.lambda_code = u(rng) / 3;
    const double expect = r.alpha * ((1 - r.lambda_in) * p.c_in_u + r.lambda_in * p.c_in_s) +
                          r.beta * ((1 - r.lambda_code) * p.c_code_u + r.lambda_code * p.c_code_s) +
                          r.delta * p.length + r.gamma * p.cat + r.zeta * p.code_cond + r.mu * p.mask_cond;
    CHECK(loss_final(p, r).total == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("loss gradients agree with finite differences") {
  std::mt19937_64 rng(13);
  const Rows a0 = random_rows(4, 3, rng);
  const std::vector<int> labels{0, 1, 0, 1};
  auto value = [&](const Matrix& m) {
    Graph g;
    const Var x = g.constant(m);
    return (info_nce_sup(x, labels, 0.3, 0.1).loss + loss_length(diff::tanh(x) * diff::tanh(x), 1.5, 2.0) +
            loss_code_cond(diff::tanh(x) * diff::tanh(x)))
        .item();
  };
  Graph g;
  const Var x = g.variable(to_matrix(a0));
  const Var loss = info_nce_sup(x, labels, 0.3, 0.1).loss + loss_length(diff::tanh(x) * diff::tanh(x), 1.5, 2.0) +
                   loss_code_cond(diff::tanh(x) * diff::tanh(x));
  g.backward(loss);
  Matrix m = to_matrix(a0);
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double keep = m[i];
    m[i] = keep + 1e-6;
    const double up = value(m);
    m[i] = keep - 1e-6;
    const double down = value(m);
    m[i] = keep;
    const double numeric = (up - down) / 2e-6;
    CHECK(std::abs(x.grad()[i] - numeric) / std::max(1.0, std::abs(numeric)) < 1e-6);
  }
}
