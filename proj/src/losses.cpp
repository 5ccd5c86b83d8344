// SPDX-License-Identifier: Apache-2.0

#include "infosieve/losses.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace infosieve::loss {

using diff::Var;

void LossWeights::validate() const {
  const std::pair<const char*, double> coeffs[] = {{"alpha", alpha}, {"beta", beta}, {"delta", delta},
                                                   {"gamma", gamma}, {"zeta", zeta}, {"mu", mu}};
  for (const auto& [name, v] : coeffs) {
    if (!std::isfinite(v) || v < 0.0) throw std::invalid_argument(std::string(name) + " must be finite and >= 0");
  }
  if (!(lambda_in >= 0.0 && lambda_in <= 1.0)) throw std::invalid_argument("lambda_in must lie in [0, 1]");
  if (!(lambda_code >= 0.0 && lambda_code <= 1.0)) throw std::invalid_argument("lambda_code must lie in [0, 1]");
  if (!(p >= 1.0) || !std::isfinite(p)) throw std::invalid_argument("p must be >= 1");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("tau must be > 0");
  if (!(smoothing >= 0.0 && smoothing <= 1.0)) throw std::invalid_argument("smoothing must lie in [0, 1]");
}

namespace {

/// Mean over weighted rows of logsumexp(scores_i) - <targets_i, scores_i>.
Var soft_cross_entropy(Var scores, Matrix targets, Matrix row_weights) {
  diff::Graph& g = *scores.graph;
  const Var per_row = diff::logsumexp_rows(scores) - diff::row_sum(scores * g.constant(std::move(targets)));
  return diff::sum(per_row * g.constant(std::move(row_weights)));
}

}  // namespace

Var info_nce_unsup(Var view1, Var view2, double tau, double smoothing) {
  if (!view1.value().same_shape(view2.value())) {
    throw std::invalid_argument("info_nce_unsup: views " + view1.value().shape() + " vs " + view2.value().shape());
  }
  if (!(tau > 0.0)) throw std::invalid_argument("info_nce_unsup: tau must be > 0");
  const std::size_t b = view1.rows();
  if (b < 2) throw std::invalid_argument("info_nce_unsup: batch of " + std::to_string(b) + " has no negatives");

  Matrix targets(b, b, smoothing / static_cast<double>(b));
  for (std::size_t i = 0; i < b; ++i) targets(i, i) += 1.0 - smoothing;
  const Matrix weights(b, 1, 0.5 / static_cast<double>(b));

  const Var s12 = diff::pairwise_distance(view1, view2) * (-1.0 / tau);
  const Var s21 = diff::pairwise_distance(view2, view1) * (-1.0 / tau);
  return soft_cross_entropy(s12, targets, weights) + soft_cross_entropy(s21, targets, weights);
}

SupervisedTerm info_nce_sup(Var embeddings, std::span<const int> labels, double tau, double smoothing) {
  const std::size_t m = embeddings.rows();
  if (labels.size() != m) throw std::invalid_argument("info_nce_sup: labels/rows mismatch");
  if (!(tau > 0.0)) throw std::invalid_argument("info_nce_sup: tau must be > 0");

  std::map<int, std::size_t> counts;
  for (int l : labels) ++counts[l];
  std::size_t anchors = 0;
  for (int l : labels)
    if (counts[l] >= 2) ++anchors;
  diff::Graph& g = *embeddings.graph;
  if (anchors == 0) return {g.constant(Matrix::scalar(0.0)), true};

  Matrix targets(m, m);
  Matrix weights(m, 1);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t positives = counts[labels[i]];
    if (positives < 2) continue;
    weights(i, 0) = 1.0 / static_cast<double>(anchors);
    for (std::size_t j = 0; j < m; ++j) {
      targets(i, j) = smoothing / static_cast<double>(m);
      if (labels[j] == labels[i]) targets(i, j) += (1.0 - smoothing) / static_cast<double>(positives);
    }
  }
  const Var scores = diff::pairwise_distance(embeddings, embeddings) * (-1.0 / tau);
  return {soft_cross_entropy(scores, std::move(targets), std::move(weights)), false};
}

Var mix(Var unsup, Var sup, double lambda) { return unsup * (1.0 - lambda) + sup * lambda; }

ContrastiveTerm loss_c_in(Var feat_view1, Var feat_view2, std::span<const int> labels, const LossWeights& w) {
  const std::size_t b = feat_view1.rows();
  if (labels.size() != b) throw std::invalid_argument("loss_c_in: labels/rows mismatch");
  ContrastiveTerm t;
  t.unsup = info_nce_unsup(feat_view1, feat_view2, w.tau, w.smoothing);
  std::vector<std::size_t> rows;
  std::vector<int> sup_labels;
  for (std::size_t view = 0; view < 2; ++view)
    for (std::size_t i = 0; i < b; ++i)
      if (labels[i] >= 0) {
        rows.push_back(view * b + i);
        sup_labels.push_back(labels[i]);
      }
  if (rows.empty()) {
    t.sup = {feat_view1.graph->constant(Matrix::scalar(0.0)), true};
  } else {
    const Var both = diff::concat_rows(feat_view1, feat_view2);
    t.sup = info_nce_sup(diff::gather_rows(both, std::move(rows)), sup_labels, w.tau, w.smoothing);
  }
  t.mixed = mix(t.unsup, t.sup.loss, w.lambda_in);
  return t;
}

ContrastiveTerm loss_c_code(Var bits_view1, Var bits_view2, Var truncated_view1, Var truncated_view2,
                            std::span<const int> labels_and_pseudo, const LossWeights& w) {
  const std::size_t b = bits_view1.rows();
  if (labels_and_pseudo.size() != b) throw std::invalid_argument("loss_c_code: labels/rows mismatch");
  ContrastiveTerm t;
  t.unsup = info_nce_unsup(bits_view1, bits_view2, w.tau, w.smoothing);
  std::vector<int> both_labels(labels_and_pseudo.begin(), labels_and_pseudo.end());
  both_labels.insert(both_labels.end(), labels_and_pseudo.begin(), labels_and_pseudo.end());
  t.sup = info_nce_sup(diff::concat_rows(truncated_view1, truncated_view2), both_labels, w.tau, w.smoothing);
  t.mixed = mix(t.unsup, t.sup.loss, w.lambda_code);
  return t;
}

Var loss_length(Var mask, double base, double p) {
  if (!(p >= 1.0)) throw std::invalid_argument("loss_length: p must be >= 1");
  if (!(base >= 1.0 && base <= 2.0)) throw std::invalid_argument("loss_length: base must lie in [1, 2]");
  diff::Graph& g = *mask.graph;
  Matrix weights(1, mask.cols());
  double acc = 1.0;
  for (std::size_t k = 0; k < mask.cols(); ++k) {
    acc *= base;
    weights(0, k) = acc;
  }
  const Var weighted = mask * g.constant(std::move(weights));
  if (p == 1.0) return diff::mean(diff::row_sum(weighted));
  return diff::mean(diff::pow(diff::row_sum(diff::pow(weighted, p)), 1.0 / p));
}

namespace {

Var binary_condition(Var v) {
  return diff::sum(diff::pow(v, 2.0) * diff::pow(diff::affine_scalar(v, -1.0, 1.0), 2.0));
}

}  // namespace

Var loss_code_cond(Var bits) { return binary_condition(bits); }
Var loss_mask_cond(Var mask) { return binary_condition(mask); }

Var loss_cat(Var logits, std::span<const int> labels) {
  const std::size_t b = logits.rows(), c = logits.cols();
  if (labels.size() != b) throw std::invalid_argument("loss_cat: labels/rows mismatch");
  if (b == 0) throw std::invalid_argument("loss_cat: empty batch");
  Matrix onehot(b, c);
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] < 0) throw std::invalid_argument("loss_cat: row " + std::to_string(i) + " is unlabeled");
    if (static_cast<std::size_t>(labels[i]) >= c) {
      throw std::invalid_argument("loss_cat: label " + std::to_string(labels[i]) + " outside " + std::to_string(c) +
                                  " classes");
    }
    onehot(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  return soft_cross_entropy(logits, std::move(onehot), Matrix(b, 1, 1.0 / static_cast<double>(b)));
}

LossBreakdown loss_final(const LossParts& parts, const LossWeights& w) {
  const std::pair<const char*, double> named[] = {
      {"c_in_u", parts.c_in_u}, {"c_in_s", parts.c_in_s}, {"c_code_u", parts.c_code_u},
      {"c_code_s", parts.c_code_s}, {"length", parts.length}, {"cat", parts.cat},
      {"code_cond", parts.code_cond}, {"mask_cond", parts.mask_cond}};
  for (const auto& [name, v] : named) {
    if (!std::isfinite(v)) throw diff::NonFiniteError(std::string("loss term ") + name + " is not finite");
  }
  LossBreakdown b;
  b.c_in_u = parts.c_in_u;
  b.c_in_s = parts.c_in_s;
  b.c_code_u = parts.c_code_u;
  b.c_code_s = parts.c_code_s;
  b.length = parts.length;
  b.cat = parts.cat;
  b.code_cond = parts.code_cond;
  b.mask_cond = parts.mask_cond;
  double total = 0.0;
  if (w.alpha != 0.0) total += w.alpha * ((1.0 - w.lambda_in) * parts.c_in_u + w.lambda_in * parts.c_in_s);
  if (w.beta != 0.0) total += w.beta * ((1.0 - w.lambda_code) * parts.c_code_u + w.lambda_code * parts.c_code_s);
  if (w.delta != 0.0) total += w.delta * parts.length;
  if (w.gamma != 0.0) total += w.gamma * parts.cat;
  if (w.zeta != 0.0) total += w.zeta * parts.code_cond;
  if (w.mu != 0.0) total += w.mu * parts.mask_cond;
  b.total = total;
  return b;
}

}  // namespace infosieve::loss
