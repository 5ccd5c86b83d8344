// SPDX-License-Identifier: Apache-2.0
//
// The four trainable blocks and the full batch objective.
//
//   features --[feature MLP, L2 norm]--> embedding
//   embedding --[code MLP, tanh(a h)]--> soft code
//   embedding --[mask MLP, shifted tanh]--> soft mask
//   bits * mask --[categorizer]--> logits over known classes

#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "infosieve/codec.hpp"
#include "infosieve/diffcore.hpp"
#include "infosieve/losses.hpp"

namespace infosieve {

struct ModelShape {
  std::size_t input_dim = 0;
  std::size_t hidden = 64;
  std::size_t embed_dim = 32;
  std::size_t code_len = 12;
  std::size_t n_known = 0;
};

struct Model {
  enum Block : std::size_t { kFeature = 0, kCode = 1, kMask = 2, kCategorizer = 3, kBlocks = 4 };

  ModelShape shape;
  std::vector<diff::ParamStore> blocks;  // indexed by Block

  static Model init(const ModelShape& shape, std::uint64_t seed);
  void validate() const;
};

/// One mini-batch. labels[i] is the known-class index of a labeled row and
/// -1 otherwise; pseudo[i] is a class or cluster id for every row.
struct BatchInput {
  Matrix view1;
  Matrix view2;
  std::vector<int> labels;
  std::vector<int> pseudo;
};

struct BatchLoss {
  loss::LossBreakdown breakdown;
  diff::GradResult grad;  // grads empty unless requested
};

/// Evaluates the weighted objective on one batch; terms with a zero
/// coefficient are not built. With want_grads, also runs the backward sweep.
BatchLoss batch_loss(const std::vector<diff::ParamStore>& blocks, const BatchInput& batch,
                     const codec::TrainSchedule& schedule, const loss::LossWeights& w, bool want_grads);

/// Forward pass without augmentation.
struct Embeddings {
  Matrix features;    // L2-normalised feature embedding, [N x embed_dim]
  Matrix soft_code;   // [N x L]
  Matrix soft_mask;   // [N x L]
  Matrix code_space;  // bits * mask / base^k, [N x L]
};

Embeddings embed(const Model& model, const Matrix& x, const codec::TrainSchedule& schedule);

}  // namespace infosieve
