#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace egoexo::nn {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

/// One value in the computation graph. `backward` reads `grad` and pushes
/// contributions into the parents.
struct Node {
  Matrix value;
  Matrix grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void accumulate(const Matrix& g) {
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
};

/// Shared handle to a graph node. Copies alias the same node.
class Var {
 public:
  Var() = default;
  explicit Var(Matrix value, bool requires_grad = false);

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  /// Zero matrix of the value's shape when no gradient has arrived.
  Matrix grad() const;
  bool has_grad() const { return node_->grad.size() != 0; }
  void zero_grad() { node_->grad.resize(0, 0); }
  bool requires_grad() const { return node_->requires_grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  bool defined() const { return node_ != nullptr; }
  double scalar() const { return node_->value(0, 0); }

  const std::shared_ptr<Node>& node() const { return node_; }

  /// Result node whose parents are `inputs`; requires_grad if any input does.
  static Var make(Matrix value, std::vector<Var> inputs, std::function<void(Node&)> backward);

 private:
  std::shared_ptr<Node> node_;
};

/// Back-propagates from a 1x1 root, accumulating into every leaf that
/// requires grad.
void backward(const Var& root);

// Elementwise and linear algebra.
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
/// a + broadcast of a 1 x n row to every row.
Var add_row(const Var& a, const Var& row);
Var scale(const Var& a, double s);
Var hadamard(const Var& a, const Var& b);
/// a times the 1x1 variable s.
Var scale_by(const Var& a, const Var& s);
Var tanh(const Var& a);
Var gelu(const Var& a);

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
Var l2_normalize_rows(const Var& x);

// Shape manipulation.
Var concat_rows(std::span<const Var> parts);
Var slice_rows(const Var& x, Eigen::Index begin, Eigen::Index count);
Var gather_rows(const Var& table, std::span<const int> ids);
/// Mean of consecutive row groups; `lengths` sum to x.rows().
Var segment_mean(const Var& x, std::span<const Eigen::Index> lengths);

/// Query rows [q_begin, q_end) attend to key rows [k_begin, k_end). With
/// `causal`, query i may only see keys up to its own position (aligned at the
/// end of both ranges). Query rows not covered by any block output zero.
struct AttentionBlock {
  Eigen::Index q_begin = 0, q_end = 0, k_begin = 0, k_end = 0;
  bool causal = false;
};

/// Multi-head scaled dot-product attention restricted to `blocks`. q: n x d,
/// k and v: m x d, d divisible by `heads`.
Var attention(const Var& q, const Var& k, const Var& v, int heads,
              std::span<const AttentionBlock> blocks);

/// Mean token cross-entropy over positions with mask true; 0 when none.
Var masked_cross_entropy(const Var& logits, std::span<const int> targets,
                         std::span<const bool> mask);

/// Sum of x * weights (elementwise); handy scalar probe for gradient tests.
Var weighted_sum(const Var& x, const Matrix& weights);

/// Scalar node with precomputed gradients d value / d inputs[i].
Var scalar_with_gradients(double value, std::vector<Var> inputs, std::vector<Matrix> grads);

}  // namespace egoexo::nn
