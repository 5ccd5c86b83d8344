// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode differentiation over dense matrices.
//
// A Graph is a tape: every op appends a node whose inputs were created
// earlier, so creation order is a valid topological order. The op set is
// closed (see Op); losses are composed from these primitives only, which
// keeps every gradient checkable against central differences.

#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "infosieve/matrix.hpp"

namespace infosieve::diff {

enum class Op : std::uint8_t {
  Leaf,
  Affine,        // x W^T + b
  Add,           // broadcasting: rhs may be [m x n], [1 x n], [m x 1] or [1 x 1]
  Mul,           // same broadcasting as Add
  AffineScalar,  // s * x + t
  Tanh,
  Gelu,
  Pow,
  Sum,
  Mean,
  RowSum,
  PairwiseDist,  // Euclidean distance between rows of two matrices
  LogSumExpRows,
  ConcatRows,
  GatherRows,
};

class Graph;

/// Handle to a node of a Graph. Cheap to copy; only valid while the graph lives.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  const Matrix& value() const;
  const Matrix& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double item() const;
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf that receives a gradient.
  Var variable(Matrix value);
  /// Leaf that never receives a gradient.
  Var constant(Matrix value);

  const Matrix& value(Var v) const { return nodes_.at(check(v)).value; }
  const Matrix& grad(Var v) const;

  /// Reverse sweep from a [1 x 1] root. Gradients of previous sweeps are cleared.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Op op = Op::Leaf;
    Matrix value;
    Matrix grad;
    int a = -1;
    int b = -1;
    int c = -1;
    double s = 0.0;
    double t = 0.0;
    std::vector<std::size_t> index;
    bool needs_grad = false;
  };

  int check(Var v) const;
  Var push(Node n);
  void propagate(const Node& n);
  void accumulate(int id, const Matrix& g);

  std::vector<Node> nodes_;
  bool has_grads_ = false;

  template <class F>
  static Var unary(Var x, Op op, F f, double s);

  friend Var affine(Var, Var, Var);
  friend Var add(Var, Var);
  friend Var mul(Var, Var);
  friend Var affine_scalar(Var, double, double);
  friend Var tanh(Var);
  friend Var gelu(Var);
  friend Var pow(Var, double);
  friend Var sum(Var);
  friend Var mean(Var);
  friend Var row_sum(Var);
  friend Var pairwise_distance(Var, Var);
  friend Var logsumexp_rows(Var);
  friend Var concat_rows(Var, Var);
  friend Var gather_rows(Var, std::vector<std::size_t>);
};

Var affine(Var x, Var weight, Var bias);
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var affine_scalar(Var x, double scale, double shift);
Var tanh(Var x);
Var gelu(Var x);
Var pow(Var x, double exponent);
Var sum(Var x);
Var mean(Var x);
Var row_sum(Var x);
Var pairwise_distance(Var a, Var b);
Var logsumexp_rows(Var x);
Var concat_rows(Var top, Var bottom);
Var gather_rows(Var x, std::vector<std::size_t> rows);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return add(a, affine_scalar(b, -1.0, 0.0)); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double s, Var a) { return affine_scalar(a, s, 0.0); }
inline Var operator*(Var a, double s) { return affine_scalar(a, s, 0.0); }
inline Var operator+(Var a, double t) { return affine_scalar(a, 1.0, t); }

/// GeLU, tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
double gelu(double x);
double gelu_derivative(double x);

// ---------------------------------------------------------------------------
// Parameters

enum class Activation : std::uint8_t { Identity, Gelu };

struct DenseLayer {
  Matrix weight;  // [out x in]
  Matrix bias;    // [1 x out]
  Activation activation = Activation::Identity;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct ParamStore {
  std::vector<DenseLayer> layers;

  std::size_t in_dim() const;
  std::size_t out_dim() const;
  std::size_t num_params() const;
  /// Throws std::invalid_argument on inconsistent shapes or non-finite entries.
  void validate() const;
  /// Same shapes, all zeros.
  ParamStore zeros_like() const;

  double& at(std::size_t flat_index);
  double at(std::size_t flat_index) const;

  friend bool operator==(const ParamStore&, const ParamStore&) = default;
};

/// Dense stack with GeLU between layers and an identity output layer.
/// Weights ~ U(-1/sqrt(in), 1/sqrt(in)), biases zero.
ParamStore make_mlp(std::span<const std::size_t> widths, std::mt19937_64& rng);

/// Straight evaluation without a graph. Returns the final pre-activation.
std::vector<double> mlp_forward(const ParamStore& params, std::span<const double> input);

/// Parameters of one ParamStore registered as graph variables.
struct BoundParams {
  const ParamStore* store = nullptr;
  std::vector<Var> weights;
  std::vector<Var> biases;
};

BoundParams bind(Graph& g, const ParamStore& params);
/// Batched forward on a graph; x is [batch x in_dim].
Var mlp_forward(const BoundParams& bound, Var x);
/// Collects the gradients of a completed backward sweep.
ParamStore gradients(const BoundParams& bound);

struct GradResult {
  double loss = 0.0;
  std::vector<ParamStore> grads;
};

// ---------------------------------------------------------------------------
// Optimisation

struct NonFiniteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Momentum SGD: v <- momentum * v + (g + wd * w); w <- w - lr * v.
/// Weight decay applies to weight matrices, not biases.
class MomentumSgd {
 public:
  MomentumSgd(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}

  void step(std::vector<ParamStore>& params, const std::vector<ParamStore>& grads, double lr);

  const std::vector<ParamStore>& velocity() const { return velocity_; }

 private:
  double momentum_;
  double weight_decay_;
  std::vector<ParamStore> velocity_;
};

double cosine_lr(double base_lr, int epoch, int n_epochs);

using LossFn = std::function<GradResult(const std::vector<ParamStore>&)>;

/// Max over all parameters of |analytic - numeric| / max(1, |numeric|),
/// numeric being the central difference with step eps.
double grad_check(const LossFn& fn, std::vector<ParamStore> params, double eps);

}  // namespace infosieve::diff
