// SPDX-License-Identifier: Apache-2.0
//
// Loss terms of the category-code objective, all built from diffcore ops.
//
// Contrastive scores are negative Euclidean distances over a temperature.
// The unsupervised form pairs row i of one view with row i of the other
// and is averaged over both directions. The supervised form scores every
// row against every row of one set, self included; an anchor's positives
// are the rows sharing its label, and anchors whose label occurs once are
// skipped.

#pragma once

#include <span>
#include <string>
#include <vector>

#include "infosieve/diffcore.hpp"

namespace infosieve::loss {

struct LossWeights {
  double alpha = 1.0;    // feature contrastive
  double beta = 1.0;     // code contrastive
  double delta = 0.1;    // code length
  double gamma = 0.01;   // categorizer cross-entropy
  double zeta = 0.01;    // code binary condition
  double mu = 0.01;      // mask binary condition
  double lambda_in = 0.35;
  double lambda_code = 0.35;
  double p = 1.0;        // norm order of the length loss
  double tau = 0.1;
  double smoothing = 0.0;
  bool scalar_code_contrast = false;  // supervised code term on the scalar numeral instead of the weighted bits

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct LossBreakdown {
  double c_in_u = 0.0;
  double c_in_s = 0.0;
  double c_code_u = 0.0;
  double c_code_s = 0.0;
  double length = 0.0;
  double cat = 0.0;
  double code_cond = 0.0;
  double mask_cond = 0.0;
  double total = 0.0;

  friend bool operator==(const LossBreakdown&, const LossBreakdown&) = default;
};

diff::Var info_nce_unsup(diff::Var view1, diff::Var view2, double tau, double smoothing);

struct SupervisedTerm {
  diff::Var loss;
  bool vacuous = false;  // no label had two members; loss is a constant 0
};

SupervisedTerm info_nce_sup(diff::Var embeddings, std::span<const int> labels, double tau, double smoothing);

/// (1 - lambda) u + lambda s.
diff::Var mix(diff::Var unsup, diff::Var sup, double lambda);

struct ContrastiveTerm {
  diff::Var unsup;
  SupervisedTerm sup;
  diff::Var mixed;
};

/// Feature-level term: unsupervised on the paired views, supervised on the
/// labeled rows of both views. labels[i] < 0 marks row i unlabeled.
ContrastiveTerm loss_c_in(diff::Var feat_view1, diff::Var feat_view2, std::span<const int> labels,
                          const LossWeights& w);

/// Code-level term: unsupervised on the raw bits of the two views,
/// supervised on the truncated codes of both views under true-or-pseudo labels.
ContrastiveTerm loss_c_code(diff::Var bits_view1, diff::Var bits_view2, diff::Var truncated_view1,
                            diff::Var truncated_view2, std::span<const int> labels_and_pseudo,
                            const LossWeights& w);

/// Mean over rows of the p-norm of mask_k * base^k.
diff::Var loss_length(diff::Var mask, double base, double p);
/// Sum over all entries of v^2 (1 - v)^2.
diff::Var loss_code_cond(diff::Var bits);
diff::Var loss_mask_cond(diff::Var mask);
/// Mean softmax cross-entropy; every label must be a valid class index.
diff::Var loss_cat(diff::Var logits, std::span<const int> labels);

/// Term values entering the final combination. Terms whose coefficient is
/// zero may be left at 0.
struct LossParts {
  double c_in_u = 0.0;
  double c_in_s = 0.0;
  double c_code_u = 0.0;
  double c_code_s = 0.0;
  double length = 0.0;
  double cat = 0.0;
  double code_cond = 0.0;
  double mask_cond = 0.0;
};

/// alpha C_in + beta C_code + delta length + gamma cat + zeta code_cond + mu mask_cond,
/// with C_in, C_code the lambda mixtures. Throws NonFiniteError naming the term.
LossBreakdown loss_final(const LossParts& parts, const LossWeights& w);

}  // namespace infosieve::loss
