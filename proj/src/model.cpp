// SPDX-License-Identifier: Apache-2.0

#include "infosieve/model.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

namespace infosieve {

using diff::Var;

Model Model::init(const ModelShape& shape, std::uint64_t seed) {
  if (shape.input_dim == 0 || shape.code_len == 0 || shape.n_known == 0) {
    throw std::invalid_argument("Model::init: input_dim, code_len and n_known must be positive");
  }
  if (shape.code_len > 24) throw std::invalid_argument("Model::init: code_len above 24 overflows the length weights");
  std::mt19937_64 rng(seed);
  Model m;
  m.shape = shape;
  const std::array<std::size_t, 3> feature{shape.input_dim, shape.hidden, shape.embed_dim};
  const std::array<std::size_t, 3> head{shape.embed_dim, shape.hidden, shape.code_len};
  const std::array<std::size_t, 2> cat{shape.code_len, shape.n_known};
  m.blocks.push_back(diff::make_mlp(feature, rng));
  m.blocks.push_back(diff::make_mlp(head, rng));
  m.blocks.push_back(diff::make_mlp(head, rng));
  m.blocks.push_back(diff::make_mlp(cat, rng));
  return m;
}

void Model::validate() const {
  if (blocks.size() != kBlocks) throw std::invalid_argument("model must have 4 blocks");
  for (const auto& b : blocks) b.validate();
  if (blocks[kFeature].in_dim() != shape.input_dim || blocks[kFeature].out_dim() != blocks[kCode].in_dim() ||
      blocks[kCode].in_dim() != blocks[kMask].in_dim() || blocks[kCode].out_dim() != shape.code_len ||
      blocks[kMask].out_dim() != shape.code_len || blocks[kCategorizer].in_dim() != shape.code_len ||
      blocks[kCategorizer].out_dim() != shape.n_known) {
    throw std::invalid_argument("model blocks have inconsistent dimensions");
  }
}

namespace {

/// Row-wise x / |x|.
Var l2_normalize(Var x) { return x * diff::pow(diff::row_sum(diff::pow(x, 2.0)), -0.5); }

struct Forward {
  Var embedding;
  Var soft;
  Var bits;
  Var mask;
};

Forward forward(const diff::BoundParams& feature, const diff::BoundParams& code, const diff::BoundParams& mask,
                Var x, const codec::TrainSchedule& s) {
  Forward f;
  f.embedding = l2_normalize(diff::mlp_forward(feature, x));
  f.soft = codec::code_head(code, f.embedding, s);
  f.bits = codec::code_bits(f.soft);
  f.mask = codec::mask_head(mask, f.embedding, s);
  return f;
}

void check_finite(double v, const char* name) {
  if (!std::isfinite(v)) throw diff::NonFiniteError(std::string("loss term ") + name + " is not finite");
}

}  // namespace

BatchLoss batch_loss(const std::vector<diff::ParamStore>& blocks, const BatchInput& batch,
                     const codec::TrainSchedule& schedule, const loss::LossWeights& w, bool want_grads) {
  const std::size_t b = batch.view1.rows();
  if (batch.labels.size() != b || batch.pseudo.size() != b || !batch.view1.same_shape(batch.view2)) {
    throw std::invalid_argument("batch_loss: inconsistent batch");
  }
  diff::Graph g;
  std::vector<diff::BoundParams> bound;
  for (const auto& blk : blocks) bound.push_back(diff::bind(g, blk));

  const Forward f1 = forward(bound[Model::kFeature], bound[Model::kCode], bound[Model::kMask],
                             g.constant(batch.view1), schedule);
  const Forward f2 = forward(bound[Model::kFeature], bound[Model::kCode], bound[Model::kMask],
                             g.constant(batch.view2), schedule);

  loss::LossParts parts;
  std::vector<std::pair<Var, double>> terms;

  if (w.alpha != 0.0) {
    const auto c_in = loss::loss_c_in(f1.embedding, f2.embedding, batch.labels, w);
    parts.c_in_u = c_in.unsup.item();
    parts.c_in_s = c_in.sup.loss.item();
    terms.emplace_back(c_in.mixed, w.alpha);
  }
  if (w.beta != 0.0) {
    Var t1 = codec::positional_code(f1.bits, f1.mask, schedule.base);
    Var t2 = codec::positional_code(f2.bits, f2.mask, schedule.base);
    if (w.scalar_code_contrast) {
      t1 = diff::row_sum(t1);
      t2 = diff::row_sum(t2);
    }
    const auto c_code = loss::loss_c_code(f1.bits, f2.bits, t1, t2, batch.pseudo, w);
    parts.c_code_u = c_code.unsup.item();
    parts.c_code_s = c_code.sup.loss.item();
    terms.emplace_back(c_code.mixed, w.beta);
  }
  if (w.delta != 0.0) {
    const Var len = loss::loss_length(f1.mask, schedule.base, w.p);
    parts.length = len.item();
    terms.emplace_back(len, w.delta);
  }
  if (w.gamma != 0.0) {
    std::vector<std::size_t> rows;
    std::vector<int> labels;
    for (std::size_t i = 0; i < b; ++i)
      if (batch.labels[i] >= 0) {
        rows.push_back(i);
        labels.push_back(batch.labels[i]);
      }
    if (!rows.empty()) {
      const Var truncated = diff::gather_rows(codec::truncate(f1.bits, f1.mask), std::move(rows));
      const Var cat = loss::loss_cat(codec::categorizer(bound[Model::kCategorizer], truncated), labels);
      parts.cat = cat.item();
      terms.emplace_back(cat, w.gamma);
    }
  }
  if (w.zeta != 0.0) {
    const Var cc = loss::loss_code_cond(f1.bits);
    parts.code_cond = cc.item();
    terms.emplace_back(cc, w.zeta);
  }
  if (w.mu != 0.0) {
    const Var mc = loss::loss_mask_cond(f1.mask);
    parts.mask_cond = mc.item();
    terms.emplace_back(mc, w.mu);
  }

  BatchLoss out;
  out.breakdown = loss::loss_final(parts, w);
  Var total = g.constant(Matrix::scalar(0.0));
  for (const auto& [term, coeff] : terms) total = total + term * coeff;
  out.grad.loss = total.item();
  check_finite(out.grad.loss, "total");
  if (want_grads) {
    g.backward(total);
    for (const auto& bp : bound) out.grad.grads.push_back(diff::gradients(bp));
  }
  return out;
}

Embeddings embed(const Model& model, const Matrix& x, const codec::TrainSchedule& schedule) {
  diff::Graph g;
  std::vector<diff::BoundParams> bound;
  for (const auto& blk : model.blocks) bound.push_back(diff::bind(g, blk));
  const Forward f = forward(bound[Model::kFeature], bound[Model::kCode], bound[Model::kMask], g.constant(x), schedule);
  Embeddings e;
  e.features = f.embedding.value();
  e.soft_code = f.soft.value();
  e.soft_mask = f.mask.value();
  e.code_space = codec::positional_code(f.bits, f.mask, schedule.base).value();
  return e;
}

}  // namespace infosieve
