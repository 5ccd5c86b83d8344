// SPDX-License-Identifier: Apache-2.0

#include "infosieve/codec.hpp"

#include <cmath>
#include <stdexcept>

namespace infosieve::codec {

using diff::Var;

TrainSchedule TrainSchedule::at(int epoch, int n_epochs, double age_max) {
  TrainSchedule s;
  s.epoch = epoch;
  s.n_epochs = n_epochs;
  if (n_epochs > 0) {
    const double frac = static_cast<double>(epoch) / static_cast<double>(n_epochs);
    s.age = 1.0 + frac * (age_max - 1.0);
    s.base = 2.0 - frac;
  }
  return s;
}

BinaryCode BinaryCode::from_soft(std::vector<double> soft) {
  BinaryCode c;
  c.bits.reserve(soft.size());
  for (double v : soft) c.bits.push_back(0.5 * (v + 1.0));
  c.soft = std::move(soft);
  return c;
}

MaskSequence MaskSequence::from_soft(std::vector<double> soft_mask, double base) {
  MaskSequence m;
  double w = 1.0;
  for (std::size_t k = 0; k < soft_mask.size(); ++k) {
    w *= base;
    m.weighted.push_back(soft_mask[k] * w);
    if (soft_mask[k] > 0.5) m.eff_length = k + 1;
  }
  m.soft_mask = std::move(soft_mask);
  return m;
}

Matrix position_weights(std::size_t length, double base, int exponent) {
  if (exponent != 1 && exponent != -1) throw std::invalid_argument("position_weights: exponent must be +1 or -1");
  Matrix w(1, length);
  double acc = 1.0;
  for (std::size_t k = 0; k < length; ++k) {
    acc = exponent > 0 ? acc * base : acc / base;
    w(0, k) = acc;
  }
  return w;
}

namespace {

void require_base(double base) {
  if (!(base >= 1.0 && base <= 2.0)) throw std::invalid_argument("positional base must lie in [1, 2]");
}

}  // namespace

Var code_head(const diff::BoundParams& params, Var features, const TrainSchedule& s) {
  if (!(s.age > 0.0)) throw std::invalid_argument("code_head: age must be positive");
  return diff::tanh(diff::mlp_forward(params, features) * s.age);
}

Var code_bits(Var soft) { return diff::affine_scalar(soft, 0.5, 0.5); }

Var mask_head(const diff::BoundParams& params, Var features, const TrainSchedule& s) {
  if (!(s.age >= 0.0)) throw std::invalid_argument("mask_head: age must be non-negative");
  const Var h = diff::mlp_forward(params, features);
  return diff::affine_scalar(diff::tanh(h + 1.0 / (s.age + 1.0)), 0.5, 0.5);
}

Var weighted_mask(Var mask, double base) {
  require_base(base);
  return mask * mask.graph->constant(position_weights(mask.cols(), base, 1));
}

Var truncate(Var bits, Var mask) {
  if (!bits.value().same_shape(mask.value())) {
    throw std::invalid_argument("truncate: code " + bits.value().shape() + " vs mask " + mask.value().shape());
  }
  return bits * mask;
}

Var positional_code(Var bits, Var mask, double base) {
  require_base(base);
  return truncate(bits, mask) * bits.graph->constant(position_weights(bits.cols(), base, -1));
}

Var positional_value(Var bits, Var mask, double base) { return diff::row_sum(positional_code(bits, mask, base)); }

Var categorizer(const diff::BoundParams& params, Var truncated) { return diff::mlp_forward(params, truncated); }

BinaryCode code_head(std::span<const double> features, const diff::ParamStore& params, const TrainSchedule& s) {
  if (!(s.age > 0.0)) throw std::invalid_argument("code_head: age must be positive");
  std::vector<double> h = diff::mlp_forward(params, features);
  for (double& v : h) v = std::tanh(s.age * v);
  return BinaryCode::from_soft(std::move(h));
}

MaskSequence mask_head(std::span<const double> features, const diff::ParamStore& params, const TrainSchedule& s) {
  if (!(s.age >= 0.0)) throw std::invalid_argument("mask_head: age must be non-negative");
  std::vector<double> h = diff::mlp_forward(params, features);
  const double shift = 1.0 / (s.age + 1.0);
  for (double& v : h) v = 0.5 * (std::tanh(v + shift) + 1.0);
  return MaskSequence::from_soft(std::move(h), s.base);
}

double positional_value(const BinaryCode& code, const MaskSequence& mask, double base) {
  require_base(base);
  if (code.length() != mask.length()) throw std::invalid_argument("positional_value: length mismatch");
  double value = 0.0;
  double w = 1.0;
  for (std::size_t k = 0; k < code.length(); ++k) {
    w /= base;
    value += mask.soft_mask[k] * code.bits[k] * w;
  }
  return value;
}

std::vector<double> truncate(const BinaryCode& code, const MaskSequence& mask) {
  if (code.length() != mask.length()) {
    throw std::invalid_argument("truncate: code length " + std::to_string(code.length()) + " vs mask length " +
                                std::to_string(mask.length()));
  }
  std::vector<double> out(code.length());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = code.bits[k] * mask.soft_mask[k];
  return out;
}

std::vector<double> categorizer(std::span<const double> truncated, const diff::ParamStore& params) {
  return diff::mlp_forward(params, truncated);
}

std::string harden(std::span<const double> soft, std::span<const double> soft_mask) {
  if (soft.size() != soft_mask.size()) throw std::invalid_argument("harden: length mismatch");
  std::string out;
  for (std::size_t k = 0; k < soft.size() && soft_mask[k] > 0.5; ++k) out += soft[k] > 0.0 ? '1' : '0';
  return out;
}

std::string harden(const BinaryCode& code, const MaskSequence& mask) { return harden(code.soft, mask.soft_mask); }

}  // namespace infosieve::codec
