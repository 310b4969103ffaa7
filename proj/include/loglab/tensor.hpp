#pragma once

// Dense double-precision tensors with a reverse-mode tape.
//
// Every tensor used by the model is at most two-dimensional; a 1-D tensor of
// length b is stored as a 1 x b row. The tape records nodes in creation order
// and backward() walks them in reverse, so gradient accumulation order is a
// pure function of the order in which ops were recorded.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "loglab/rng.hpp"

namespace loglab::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Shape = std::vector<std::size_t>;

std::string shape_string(const Matrix& m);

/// A named trainable tensor plus its gradient accumulator and AdamW moments.
struct Param {
  std::string name;
  Shape shape;  // logical shape; 1-D params are stored as a single row
  Matrix value;
  Matrix grad;  // empty until the first accumulation
  Matrix first_moment;
  Matrix second_moment;
};

class ParamStore {
 public:
  /// Adds a parameter. Throws ConfigError on a duplicate name.
  Param& add(const std::string& name, Matrix value, Shape shape = {});

  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }

  void zero_grad();
  std::size_t scalar_count() const;

  /// Optimizer step counter (number of adamw_step calls so far).
  long step_count = 0;

 private:
  std::vector<Param> params_;
};

class Tape;

struct Var {
  std::size_t id = 0;
};

/// Records a forward computation and replays it backwards.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// A value that receives no gradient.
  Var constant(Matrix value);
  /// A gradient-receiving leaf that owns its value.
  Var leaf(Matrix value);
  /// A gradient-receiving leaf that views an external matrix (must outlive the tape).
  Var view(const Matrix& value);
  /// Leaf for a store parameter; remembered so gradients can be flushed back.
  Var param(Param& p);

  const Matrix& value(Var v) const;
  /// Gradient of a node; a zero matrix if nothing flowed into it.
  Matrix grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(root)/d(root) = seed (root must be 1x1) and back-propagates.
  void backward(Var root, double seed = 1.0);
  /// Adds gradients of every param() leaf into the corresponding Param::grad.
  void flush_param_grads();

  // Ops. Shape errors throw NumericError naming the operand shapes.
  Var matmul(Var a, Var b);
  Var matmul_transposed(Var a, Var b);  // a * b^T
  Var linear(Var x, Var weight, Var bias);
  Var add(Var a, Var b);
  Var scale(Var a, double factor);
  Var relu(Var a);
  Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
  /// Row-wise softmax over the key axis; keys with attendable[k] == false get
  /// probability exactly 0. A row with no attendable key is an error.
  Var masked_softmax(Var scores, const std::vector<bool>& attendable);
  Var slice_cols(Var x, std::size_t start, std::size_t count);
  Var concat_cols(std::span<const Var> parts);
  Var row(Var x, std::size_t r);
  Var sum(Var x);
  /// Numerically stable binary cross-entropy on a 1x1 logit.
  Var bce_with_logits(Var logit, double target);
  /// tau: n x 1 (constant), omega/phi: 1 x d. Column 0 is linear, the rest sine.
  Var time2vec(Var tau, Var omega, Var phi);
  /// Inverted dropout with a mask drawn from rng; identity when rate == 0.
  Var dropout(Var x, double rate, Rng& rng);

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    Matrix grad;
    bool requires_grad = false;
    std::function<void(Tape&, const Node&)> backward;
  };

  const Matrix& val(std::size_t id) const {
    return nodes_[id].external ? *nodes_[id].external : nodes_[id].value;
  }
  Matrix& grad_ref(std::size_t id);
  Var push(Matrix value, bool requires_grad, std::function<void(Tape&, const Node&)> backward);

  std::vector<Node> nodes_;
  std::vector<std::pair<std::size_t, Param*>> param_leaves_;
};

/// Free-function form of the masked softmax on a plain score matrix.
Matrix masked_softmax(const Matrix& scores, const std::vector<bool>& attendable);

/// Stable max(z,0) - z*y + log(1 + exp(-|z|)).
double bce_with_logits(double logit, double target);
double sigmoid(double z);

struct AttentionWeights {
  Var wq, bq, wk, bk, wv, bv, wo, bo;
};

/// Scaled dot-product self-attention with `heads` heads over x: n x d.
/// Throws ConfigError when d is not divisible by heads.
Var multi_head_attention(Tape& tape, Var x, const std::vector<bool>& attendable, std::size_t heads,
                         const AttentionWeights& w);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
};

/// Loss evaluation for grad_check: returns the loss and, when accumulate is
/// true, adds d(loss)/d(param) into every Param::grad of the store.
using LossFn = std::function<double(ParamStore&, bool accumulate)>;

/// Central-difference check of every scalar in the store. The relative error
/// of one coordinate is |a - n| / max(1, |a|, |n|). Throws NumericError on a
/// non-finite loss or gradient.
GradCheckResult grad_check(ParamStore& store, const LossFn& loss, double probe = 1e-5);

}  // namespace loglab::nn
