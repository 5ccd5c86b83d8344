// SPDX-License-Identifier: Apache-2.0
//
// Code generator, code masker and categorizer heads, plus the positional
// encoding that turns a (code, mask) pair into a truncated binary numeral.
//
// Positions are 1-based throughout: bit k of a code has positional weight
// base^-k and mask bit k has length weight base^k.

#pragma once

#include <span>
#include <string>
#include <vector>

#include "infosieve/diffcore.hpp"

namespace infosieve::codec {

struct TrainSchedule {
  double age = 1.0;   // tanh sharpening; nondecreasing over epochs
  double base = 2.0;  // positional base, annealed 2 -> 1
  int epoch = 0;
  int n_epochs = 0;

  /// age = 1 + epoch (age_max - 1) / n_epochs, base = 2 - epoch / n_epochs.
  static TrainSchedule at(int epoch, int n_epochs, double age_max = 10.0);
};

struct BinaryCode {
  std::vector<double> soft;  // generator output in (-1, 1)
  std::vector<double> bits;  // (soft + 1) / 2

  std::size_t length() const { return soft.size(); }
  static BinaryCode from_soft(std::vector<double> soft);
};

struct MaskSequence {
  std::vector<double> soft_mask;  // in (0, 1)
  std::vector<double> weighted;   // soft_mask_k * base^k
  std::size_t eff_length = 0;     // one past the last mask bit above 1/2

  std::size_t length() const { return soft_mask.size(); }
  static MaskSequence from_soft(std::vector<double> soft_mask, double base);
};

/// [1 x L] row of base^k (exponent = +1) or base^-k (exponent = -1), k = 1..L.
Matrix position_weights(std::size_t length, double base, int exponent);

// Batched graph versions. Rows are samples.
diff::Var code_head(const diff::BoundParams& params, diff::Var features, const TrainSchedule& s);
diff::Var code_bits(diff::Var soft);
diff::Var mask_head(const diff::BoundParams& params, diff::Var features, const TrainSchedule& s);
diff::Var weighted_mask(diff::Var mask, double base);
diff::Var truncate(diff::Var bits, diff::Var mask);
/// bits_k * mask_k / base^k: the truncated code with positional weights.
diff::Var positional_code(diff::Var bits, diff::Var mask, double base);
/// Row sums of positional_code: the scalar numeral per sample, [B x 1].
diff::Var positional_value(diff::Var bits, diff::Var mask, double base);
diff::Var categorizer(const diff::BoundParams& params, diff::Var truncated);

// Single-sample versions.
BinaryCode code_head(std::span<const double> features, const diff::ParamStore& params, const TrainSchedule& s);
MaskSequence mask_head(std::span<const double> features, const diff::ParamStore& params, const TrainSchedule& s);
double positional_value(const BinaryCode& code, const MaskSequence& mask, double base);
std::vector<double> truncate(const BinaryCode& code, const MaskSequence& mask);
std::vector<double> categorizer(std::span<const double> truncated, const diff::ParamStore& params);

/// bit k is '1' iff soft_k > 0; the string stops at the first mask bit <= 1/2.
std::string harden(const BinaryCode& code, const MaskSequence& mask);
std::string harden(std::span<const double> soft, std::span<const double> soft_mask);

}  // namespace infosieve::codec
