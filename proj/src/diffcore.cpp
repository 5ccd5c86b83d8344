// SPDX-License-Identifier: Apache-2.0

#include "infosieve/diffcore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace infosieve::diff {

namespace {

constexpr double kSqrt2OverPi = 0.7978845608028654;
constexpr double kGeluCubic = 0.044715;

enum class Broadcast { Full, Row, Col, Scalar };

Broadcast broadcast_kind(const Matrix& a, const Matrix& b, const char* op) {
  if (a.same_shape(b)) return Broadcast::Full;
  if (b.rows() == 1 && b.cols() == 1) return Broadcast::Scalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::Row;
  if (b.cols() == 1 && b.rows() == a.rows()) return Broadcast::Col;
  throw std::invalid_argument(std::string(op) + ": cannot broadcast " + b.shape() + " onto " + a.shape());
}

std::size_t bindex(Broadcast k, const Matrix& b, std::size_t r, std::size_t c) {
  switch (k) {
    case Broadcast::Full: return r * b.cols() + c;
    case Broadcast::Row: return c;
    case Broadcast::Col: return r;
    case Broadcast::Scalar: return 0;
  }
  return 0;
}

void require_finite(const Matrix& m, const char* what) {
  for (double v : m.data()) {
    if (!std::isfinite(v)) throw NonFiniteError(std::string(what) + ": non-finite value");
  }
}

}  // namespace

double gelu(double x) {
  const double inner = kSqrt2OverPi * (x + kGeluCubic * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(inner));
}

double gelu_derivative(double x) {
  const double inner = kSqrt2OverPi * (x + kGeluCubic * x * x * x);
  const double t = std::tanh(inner);
  const double dinner = kSqrt2OverPi * (1.0 + 3.0 * kGeluCubic * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner;
}

// ---------------------------------------------------------------------------
// Var / Graph

const Matrix& Var::value() const { return graph->value(*this); }
const Matrix& Var::grad() const { return graph->grad(*this); }

double Var::item() const {
  const Matrix& v = value();
  if (v.size() != 1) throw std::invalid_argument("Var::item on non-scalar " + v.shape());
  return v[0];
}

int Graph::check(Var v) const {
  if (v.graph != this || v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw std::invalid_argument("Var does not belong to this graph");
  }
  return v.id;
}

Var Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Graph::variable(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = true;
  return push(std::move(n));
}

Var Graph::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

const Matrix& Graph::grad(Var v) const {
  const Node& n = nodes_.at(check(v));
  if (!has_grads_) throw std::logic_error("Graph::grad before backward");
  if (n.grad.empty() && !n.value.empty()) {
    static const Matrix kEmpty;
    return kEmpty;
  }
  return n.grad;
}

void Graph::accumulate(int id, const Matrix& g) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.needs_grad) return;
  if (n.grad.empty()) {
    n.grad = g;
    return;
  }
  for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
}

void Graph::backward(Var root) {
  const int rid = check(root);
  if (nodes_[rid].value.size() != 1) {
    throw std::invalid_argument("backward: root must be scalar, got " + nodes_[rid].value.shape());
  }
  for (auto& n : nodes_) n.grad = Matrix();
  has_grads_ = true;
  if (!nodes_[rid].needs_grad) return;
  nodes_[rid].grad = Matrix::scalar(1.0);
  for (int id = rid; id >= 0; --id) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.op == Op::Leaf || n.grad.empty()) continue;
    propagate(n);
  }
  // Leaves that were not reached get explicit zeros so callers see full shapes.
  for (auto& n : nodes_) {
    if (n.needs_grad && n.grad.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  }
}

void Graph::propagate(const Node& n) {
  const Matrix& g = n.grad;
  switch (n.op) {
    case Op::Leaf:
      break;
    case Op::Affine: {
      const Matrix& x = nodes_[n.a].value;
      const Matrix& w = nodes_[n.b].value;
      const std::size_t batch = x.rows(), in = x.cols(), out = w.rows();
      if (nodes_[n.a].needs_grad) {
        Matrix gx(batch, in);
        for (std::size_t r = 0; r < batch; ++r)
          for (std::size_t o = 0; o < out; ++o) {
            const double go = g(r, o);
            if (go == 0.0) continue;
            for (std::size_t i = 0; i < in; ++i) gx(r, i) += go * w(o, i);
          }
        accumulate(n.a, gx);
      }
      if (nodes_[n.b].needs_grad) {
        Matrix gw(out, in);
        for (std::size_t r = 0; r < batch; ++r)
          for (std::size_t o = 0; o < out; ++o) {
            const double go = g(r, o);
            if (go == 0.0) continue;
            for (std::size_t i = 0; i < in; ++i) gw(o, i) += go * x(r, i);
          }
        accumulate(n.b, gw);
      }
      if (nodes_[n.c].needs_grad) {
        Matrix gb(1, out);
        for (std::size_t r = 0; r < batch; ++r)
          for (std::size_t o = 0; o < out; ++o) gb(0, o) += g(r, o);
        accumulate(n.c, gb);
      }
      break;
    }
    case Op::Add:
    case Op::Mul: {
      const Matrix& a = nodes_[n.a].value;
      const Matrix& b = nodes_[n.b].value;
      const Broadcast k = broadcast_kind(a, b, "backward");
      const bool mul_op = n.op == Op::Mul;
      if (nodes_[n.a].needs_grad) {
        Matrix ga(a.rows(), a.cols());
        for (std::size_t r = 0; r < a.rows(); ++r)
          for (std::size_t c = 0; c < a.cols(); ++c)
            ga(r, c) = mul_op ? g(r, c) * b[bindex(k, b, r, c)] : g(r, c);
        accumulate(n.a, ga);
      }
      if (nodes_[n.b].needs_grad) {
        Matrix gb(b.rows(), b.cols());
        for (std::size_t r = 0; r < a.rows(); ++r)
          for (std::size_t c = 0; c < a.cols(); ++c)
            gb[bindex(k, b, r, c)] += mul_op ? g(r, c) * a(r, c) : g(r, c);
        accumulate(n.b, gb);
      }
      break;
    }
    case Op::AffineScalar: {
      Matrix ga = g;
      for (double& v : ga.data()) v *= n.s;
      accumulate(n.a, ga);
      break;
    }
    case Op::Tanh: {
      Matrix ga = g;
      for (std::size_t i = 0; i < ga.size(); ++i) {
        const double y = n.value[i];
        ga[i] *= 1.0 - y * y;
      }
      accumulate(n.a, ga);
      break;
    }
    case Op::Gelu: {
      const Matrix& x = nodes_[n.a].value;
      Matrix ga = g;
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= gelu_derivative(x[i]);
      accumulate(n.a, ga);
      break;
    }
    case Op::Pow: {
      const Matrix& x = nodes_[n.a].value;
      Matrix ga = g;
      for (std::size_t i = 0; i < ga.size(); ++i) {
        // Subgradient 0 where the derivative is undefined at the origin.
        const double d = (x[i] == 0.0 && n.s < 1.0) ? 0.0 : n.s * std::pow(x[i], n.s - 1.0);
        ga[i] *= d;
      }
      accumulate(n.a, ga);
      break;
    }
    case Op::Sum:
    case Op::Mean: {
      const Matrix& x = nodes_[n.a].value;
      const double scale = n.op == Op::Mean ? 1.0 / static_cast<double>(x.size()) : 1.0;
      accumulate(n.a, Matrix(x.rows(), x.cols(), g[0] * scale));
      break;
    }
    case Op::RowSum: {
      const Matrix& x = nodes_[n.a].value;
      Matrix ga(x.rows(), x.cols());
      for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) ga(r, c) = g(r, 0);
      accumulate(n.a, ga);
      break;
    }
    case Op::PairwiseDist: {
      const Matrix& a = nodes_[n.a].value;
      const Matrix& b = nodes_[n.b].value;
      const std::size_t d = a.cols();
      Matrix ga(a.rows(), d), gb(b.rows(), d);
      for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.rows(); ++j) {
          const double dist = n.value(i, j);
          if (dist == 0.0 || g(i, j) == 0.0) continue;  // subgradient 0 at coincident rows
          const double f = g(i, j) / dist;
          for (std::size_t k = 0; k < d; ++k) {
            const double diff = a(i, k) - b(j, k);
            ga(i, k) += f * diff;
            gb(j, k) -= f * diff;
          }
        }
      if (n.a == n.b) {
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gb[i];
        accumulate(n.a, ga);
      } else {
        accumulate(n.a, ga);
        accumulate(n.b, gb);
      }
      break;
    }
    case Op::LogSumExpRows: {
      const Matrix& x = nodes_[n.a].value;
      Matrix ga(x.rows(), x.cols());
      for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) ga(r, c) = g(r, 0) * std::exp(x(r, c) - n.value(r, 0));
      accumulate(n.a, ga);
      break;
    }
    case Op::ConcatRows: {
      const Matrix& top = nodes_[n.a].value;
      const Matrix& bottom = nodes_[n.b].value;
      const std::size_t cols = top.cols();
      Matrix gt(top.rows(), cols), gbm(bottom.rows(), cols);
      std::copy(g.data().begin(), g.data().begin() + static_cast<std::ptrdiff_t>(top.size()), gt.data().begin());
      std::copy(g.data().begin() + static_cast<std::ptrdiff_t>(top.size()), g.data().end(), gbm.data().begin());
      accumulate(n.a, gt);
      accumulate(n.b, gbm);
      break;
    }
    case Op::GatherRows: {
      const Matrix& x = nodes_[n.a].value;
      Matrix ga(x.rows(), x.cols());
      for (std::size_t r = 0; r < n.index.size(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) ga(n.index[r], c) += g(r, c);
      accumulate(n.a, ga);
      break;
    }
  }
}

// ---------------------------------------------------------------------------
// Ops

namespace {

Graph& same_graph(Var a, Var b) {
  if (a.graph == nullptr || a.graph != b.graph) throw std::invalid_argument("ops across different graphs");
  return *a.graph;
}

}  // namespace

Var affine(Var x, Var weight, Var bias) {
  Graph& g = same_graph(x, weight);
  same_graph(x, bias);
  const Matrix& xv = x.value();
  const Matrix& w = weight.value();
  const Matrix& b = bias.value();
  if (xv.cols() != w.cols() || b.rows() != 1 || b.cols() != w.rows()) {
    throw std::invalid_argument("affine: input " + xv.shape() + ", weight " + w.shape() + ", bias " + b.shape());
  }
  Matrix out(xv.rows(), w.rows());
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t o = 0; o < w.rows(); ++o) {
      double acc = b(0, o);
      for (std::size_t i = 0; i < w.cols(); ++i) acc += xv(r, i) * w(o, i);
      out(r, o) = acc;
    }
  Graph::Node n;
  n.op = Op::Affine;
  n.value = std::move(out);
  n.a = x.id;
  n.b = weight.id;
  n.c = bias.id;
  n.needs_grad = g.nodes_[x.id].needs_grad || g.nodes_[weight.id].needs_grad || g.nodes_[bias.id].needs_grad;
  return g.push(std::move(n));
}

namespace {

template <class F>
Matrix broadcast_apply(const Matrix& a, const Matrix& b, const char* op, F f) {
  const Broadcast k = broadcast_kind(a, b, op);
  Matrix out(a.rows(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out(r, c) = f(a(r, c), b[bindex(k, b, r, c)]);
  return out;
}

}  // namespace

Var add(Var a, Var b) {
  Graph& g = same_graph(a, b);
  Graph::Node n;
  n.op = Op::Add;
  n.value = broadcast_apply(a.value(), b.value(), "add", [](double x, double y) { return x + y; });
  n.a = a.id;
  n.b = b.id;
  n.needs_grad = g.nodes_[a.id].needs_grad || g.nodes_[b.id].needs_grad;
  return g.push(std::move(n));
}

Var mul(Var a, Var b) {
  Graph& g = same_graph(a, b);
  Graph::Node n;
  n.op = Op::Mul;
  n.value = broadcast_apply(a.value(), b.value(), "mul", [](double x, double y) { return x * y; });
  n.a = a.id;
  n.b = b.id;
  n.needs_grad = g.nodes_[a.id].needs_grad || g.nodes_[b.id].needs_grad;
  return g.push(std::move(n));
}

template <class F>
Var Graph::unary(Var x, Op op, F f, double s) {
  Graph& g = *x.graph;
  Matrix out = x.value();
  for (double& v : out.data()) v = f(v);
  Graph::Node n;
  n.op = op;
  n.value = std::move(out);
  n.a = x.id;
  n.s = s;
  n.needs_grad = g.nodes_[x.id].needs_grad;
  return g.push(std::move(n));
}

Var affine_scalar(Var x, double scale, double shift) {
  return Graph::unary(x, Op::AffineScalar, [=](double v) { return scale * v + shift; }, scale);
}

Var tanh(Var x) { return Graph::unary(x, Op::Tanh, [](double v) { return std::tanh(v); }, 0.0); }

Var gelu(Var x) { return Graph::unary(x, Op::Gelu, [](double v) { return gelu(v); }, 0.0); }

Var pow(Var x, double exponent) {
  return Graph::unary(x, Op::Pow, [=](double v) { return std::pow(v, exponent); }, exponent);
}

Var sum(Var x) {
  Graph& g = *x.graph;
  double acc = 0.0;
  for (double v : x.value().data()) acc += v;
  Graph::Node n;
  n.op = Op::Sum;
  n.value = Matrix::scalar(acc);
  n.a = x.id;
  n.needs_grad = g.nodes_[x.id].needs_grad;
  return g.push(std::move(n));
}

Var mean(Var x) {
  Graph& g = *x.graph;
  if (x.value().empty()) throw std::invalid_argument("mean of empty matrix");
  double acc = 0.0;
  for (double v : x.value().data()) acc += v;
  Graph::Node n;
  n.op = Op::Mean;
  n.value = Matrix::scalar(acc / static_cast<double>(x.value().size()));
  n.a = x.id;
  n.needs_grad = g.nodes_[x.id].needs_grad;
  return g.push(std::move(n));
}

Var row_sum(Var x) {
  Graph& g = *x.graph;
  const Matrix& v = x.value();
  Matrix out(v.rows(), 1);
  for (std::size_t r = 0; r < v.rows(); ++r)
    for (std::size_t c = 0; c < v.cols(); ++c) out(r, 0) += v(r, c);
  Graph::Node n;
  n.op = Op::RowSum;
  n.value = std::move(out);
  n.a = x.id;
  n.needs_grad = g.nodes_[x.id].needs_grad;
  return g.push(std::move(n));
}

Var pairwise_distance(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.cols()) {
    throw std::invalid_argument("pairwise_distance: " + av.shape() + " vs " + bv.shape());
  }
  Matrix out(av.rows(), bv.rows());
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < bv.rows(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < av.cols(); ++k) {
        const double d = av(i, k) - bv(j, k);
        acc += d * d;
      }
      out(i, j) = std::sqrt(acc);
    }
  Graph::Node n;
  n.op = Op::PairwiseDist;
  n.value = std::move(out);
  n.a = a.id;
  n.b = b.id;
  n.needs_grad = g.nodes_[a.id].needs_grad || g.nodes_[b.id].needs_grad;
  return g.push(std::move(n));
}

Var logsumexp_rows(Var x) {
  Graph& g = *x.graph;
  const Matrix& v = x.value();
  if (v.cols() == 0) throw std::invalid_argument("logsumexp_rows: zero columns");
  Matrix out(v.rows(), 1);
  for (std::size_t r = 0; r < v.rows(); ++r) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < v.cols(); ++c) m = std::max(m, v(r, c));
    double acc = 0.0;
    for (std::size_t c = 0; c < v.cols(); ++c) acc += std::exp(v(r, c) - m);
    out(r, 0) = m + std::log(acc);
  }
  Graph::Node n;
  n.op = Op::LogSumExpRows;
  n.value = std::move(out);
  n.a = x.id;
  n.needs_grad = g.nodes_[x.id].needs_grad;
  return g.push(std::move(n));
}

Var concat_rows(Var top, Var bottom) {
  Graph& g = same_graph(top, bottom);
  const Matrix& t = top.value();
  const Matrix& b = bottom.value();
  if (t.cols() != b.cols()) throw std::invalid_argument("concat_rows: " + t.shape() + " vs " + b.shape());
  std::vector<double> data = t.data();
  data.insert(data.end(), b.data().begin(), b.data().end());
  Graph::Node n;
  n.op = Op::ConcatRows;
  n.value = Matrix(t.rows() + b.rows(), t.cols(), std::move(data));
  n.a = top.id;
  n.b = bottom.id;
  n.needs_grad = g.nodes_[top.id].needs_grad || g.nodes_[bottom.id].needs_grad;
  return g.push(std::move(n));
}

Var gather_rows(Var x, std::vector<std::size_t> rows) {
  Graph& g = *x.graph;
  const Matrix& v = x.value();
  Matrix out(rows.size(), v.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= v.rows()) throw std::out_of_range("gather_rows: row index out of range");
    for (std::size_t c = 0; c < v.cols(); ++c) out(r, c) = v(rows[r], c);
  }
  Graph::Node n;
  n.op = Op::GatherRows;
  n.value = std::move(out);
  n.a = x.id;
  n.index = std::move(rows);
  n.needs_grad = g.nodes_[x.id].needs_grad;
  return g.push(std::move(n));
}

// ---------------------------------------------------------------------------
// ParamStore

std::size_t ParamStore::in_dim() const { return layers.empty() ? 0 : layers.front().weight.cols(); }
std::size_t ParamStore::out_dim() const { return layers.empty() ? 0 : layers.back().weight.rows(); }

std::size_t ParamStore::num_params() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

void ParamStore::validate() const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const std::string where = "layer " + std::to_string(i);
    if (l.bias.rows() != 1 || l.bias.cols() != l.weight.rows()) {
      throw std::invalid_argument(where + ": bias " + l.bias.shape() + " does not match weight " + l.weight.shape());
    }
    if (i > 0 && layers[i - 1].weight.rows() != l.weight.cols()) {
      throw std::invalid_argument(where + ": in-dimension " + std::to_string(l.weight.cols()) +
                                  " does not match previous out-dimension " +
                                  std::to_string(layers[i - 1].weight.rows()));
    }
    for (double v : l.weight.data())
      if (!std::isfinite(v)) throw std::invalid_argument(where + ": non-finite weight");
    for (double v : l.bias.data())
      if (!std::isfinite(v)) throw std::invalid_argument(where + ": non-finite bias");
  }
}

ParamStore ParamStore::zeros_like() const {
  ParamStore z;
  for (const auto& l : layers) {
    z.layers.push_back({Matrix(l.weight.rows(), l.weight.cols()), Matrix(l.bias.rows(), l.bias.cols()), l.activation});
  }
  return z;
}

double& ParamStore::at(std::size_t flat) {
  for (auto& l : layers) {
    if (flat < l.weight.size()) return l.weight[flat];
    flat -= l.weight.size();
    if (flat < l.bias.size()) return l.bias[flat];
    flat -= l.bias.size();
  }
  throw std::out_of_range("ParamStore::at");
}

double ParamStore::at(std::size_t flat) const { return const_cast<ParamStore*>(this)->at(flat); }

ParamStore make_mlp(std::span<const std::size_t> widths, std::mt19937_64& rng) {
  if (widths.size() < 2) throw std::invalid_argument("make_mlp: need at least input and output widths");
  ParamStore p;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const std::size_t in = widths[i], out = widths[i + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    DenseLayer l{Matrix(out, in), Matrix(1, out), i + 2 < widths.size() ? Activation::Gelu : Activation::Identity};
    for (double& w : l.weight.data()) w = u(rng);
    p.layers.push_back(std::move(l));
  }
  return p;
}

std::vector<double> mlp_forward(const ParamStore& params, std::span<const double> input) {
  if (params.layers.empty()) return {input.begin(), input.end()};
  if (input.size() != params.in_dim()) {
    throw std::invalid_argument("mlp_forward: input length " + std::to_string(input.size()) +
                                " but first layer expects " + std::to_string(params.in_dim()) + " (weight " +
                                params.layers.front().weight.shape() + ")");
  }
  std::vector<double> h(input.begin(), input.end());
  for (const auto& l : params.layers) {
    std::vector<double> next(l.weight.rows());
    for (std::size_t o = 0; o < l.weight.rows(); ++o) {
      double acc = l.bias(0, o);
      for (std::size_t i = 0; i < l.weight.cols(); ++i) acc += l.weight(o, i) * h[i];
      next[o] = l.activation == Activation::Gelu ? gelu(acc) : acc;
    }
    h = std::move(next);
  }
  return h;
}

BoundParams bind(Graph& g, const ParamStore& params) {
  BoundParams b;
  b.store = &params;
  for (const auto& l : params.layers) {
    b.weights.push_back(g.variable(l.weight));
    b.biases.push_back(g.variable(l.bias));
  }
  return b;
}

Var mlp_forward(const BoundParams& bound, Var x) {
  const auto& layers = bound.store->layers;
  if (!layers.empty() && x.cols() != layers.front().weight.cols()) {
    throw std::invalid_argument("mlp_forward: input " + x.value().shape() + " but first layer weight is " +
                                layers.front().weight.shape());
  }
  Var h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = affine(h, bound.weights[i], bound.biases[i]);
    if (layers[i].activation == Activation::Gelu) h = gelu(h);
  }
  return h;
}

ParamStore gradients(const BoundParams& bound) {
  ParamStore out = bound.store->zeros_like();
  for (std::size_t i = 0; i < out.layers.size(); ++i) {
    out.layers[i].weight = bound.weights[i].grad();
    out.layers[i].bias = bound.biases[i].grad();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Optimisation

void MomentumSgd::step(std::vector<ParamStore>& params, const std::vector<ParamStore>& grads, double lr) {
  if (!(lr >= 0.0)) throw std::invalid_argument("sgd step: lr must be non-negative");
  if (params.size() != grads.size()) throw std::invalid_argument("sgd step: params/grads count mismatch");
  for (std::size_t p = 0; p < grads.size(); ++p) {
    for (std::size_t l = 0; l < grads[p].layers.size(); ++l) {
      require_finite(grads[p].layers[l].weight, ("gradient of block " + std::to_string(p) + " layer " + std::to_string(l)).c_str());
      require_finite(grads[p].layers[l].bias, ("gradient of block " + std::to_string(p) + " layer " + std::to_string(l)).c_str());
    }
  }
  if (velocity_.empty()) {
    for (const auto& p : params) velocity_.push_back(p.zeros_like());
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t l = 0; l < params[p].layers.size(); ++l) {
      auto& layer = params[p].layers[l];
      auto& vel = velocity_[p].layers[l];
      const auto& gr = grads[p].layers[l];
      if (!layer.weight.same_shape(gr.weight) || !layer.bias.same_shape(gr.bias)) {
        throw std::invalid_argument("sgd step: gradient shape mismatch");
      }
      for (std::size_t i = 0; i < layer.weight.size(); ++i) {
        const double gi = gr.weight[i] + weight_decay_ * layer.weight[i];
        vel.weight[i] = momentum_ * vel.weight[i] + gi;
        layer.weight[i] -= lr * vel.weight[i];
      }
      for (std::size_t i = 0; i < layer.bias.size(); ++i) {
        vel.bias[i] = momentum_ * vel.bias[i] + gr.bias[i];
        layer.bias[i] -= lr * vel.bias[i];
      }
    }
  }
}

double cosine_lr(double base_lr, int epoch, int n_epochs) {
  if (n_epochs <= 0) return base_lr;
  constexpr double kPi = 3.14159265358979323846;
  return 0.5 * base_lr * (1.0 + std::cos(kPi * static_cast<double>(epoch) / static_cast<double>(n_epochs)));
}

double grad_check(const LossFn& fn, std::vector<ParamStore> params, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("grad_check: eps must be positive");
  const GradResult analytic = fn(params);
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    const std::size_t count = params[p].num_params();
    for (std::size_t i = 0; i < count; ++i) {
      double& slot = params[p].at(i);
      const double saved = slot;
      slot = saved + eps;
      const double up = fn(params).loss;
      slot = saved - eps;
      const double down = fn(params).loss;
      slot = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic.grads.at(p).at(i);
      worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(numeric)));
    }
  }
  return worst;
}

}  // namespace infosieve::diff
