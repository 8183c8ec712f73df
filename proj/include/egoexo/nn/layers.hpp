#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "egoexo/nn/autograd.hpp"

namespace egoexo::nn {

/// Ordered, named collection of trainable leaves.
class ParameterSet {
 public:
  Var add(const std::string& name, Matrix init);
  const std::vector<std::pair<std::string, Var>>& items() const { return items_; }
  Var find(const std::string& name) const;
  std::size_t count() const;
  /// Appends `other`'s parameters with `prefix` prepended to their names.
  void extend(const ParameterSet& other, const std::string& prefix = "");
  void zero_grad();
  /// Copies values (not gradients); names and shapes must match.
  void assign(const ParameterSet& other);

 private:
  std::vector<std::pair<std::string, Var>> items_;
};

/// Deterministic initializers.
Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng);

struct Linear {
  Var weight;  // in x out
  Var bias;    // 1 x out

  Linear() = default;
  Linear(ParameterSet& ps, const std::string& name, int in, int out, std::mt19937_64& rng,
         bool with_bias = true);
  Var operator()(const Var& x) const;
};

struct LayerNorm {
  Var gamma, beta;

  LayerNorm() = default;
  LayerNorm(ParameterSet& ps, const std::string& name, int dim);
  Var operator()(const Var& x) const { return layer_norm(x, gamma, beta); }
};

struct FeedForward {
  Linear in, out;

  FeedForward() = default;
  FeedForward(ParameterSet& ps, const std::string& name, int dim, int hidden, std::mt19937_64& rng);
  Var operator()(const Var& x) const { return out(gelu(in(x))); }
};

struct MultiHeadAttention {
  Linear q, k, v, o;
  int heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterSet& ps, const std::string& name, int dim, int heads,
                     std::mt19937_64& rng);
  Var operator()(const Var& queries, const Var& keys_values,
                 std::span<const AttentionBlock> blocks) const;
};

/// Pre-norm transformer layer: x + attn(ln(x)), then x + ffn(ln(x)).
struct TransformerLayer {
  LayerNorm ln_attn, ln_ffn;
  MultiHeadAttention attn;
  FeedForward ffn;

  TransformerLayer() = default;
  TransformerLayer(ParameterSet& ps, const std::string& name, int dim, int heads,
                   std::mt19937_64& rng);
  Var operator()(const Var& x, std::span<const AttentionBlock> blocks) const;
};

/// Block-diagonal layout for `count` sequences of `length` rows each.
std::vector<AttentionBlock> block_diagonal(Eigen::Index count, Eigen::Index length,
                                           bool causal = false);

}  // namespace egoexo::nn
