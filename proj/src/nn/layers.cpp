#include "egoexo/nn/layers.hpp"

#include <cmath>

#include "egoexo/errors.hpp"

namespace egoexo::nn {

Var ParameterSet::add(const std::string& name, Matrix init) {
  for (const auto& [n, v] : items_)
    if (n == name) throw ValidationError("parameter " + name + " registered twice");
  Var v(std::move(init), true);
  items_.emplace_back(name, v);
  return v;
}

Var ParameterSet::find(const std::string& name) const {
  for (const auto& [n, v] : items_)
    if (n == name) return v;
  return {};
}

std::size_t ParameterSet::count() const {
  std::size_t n = 0;
  for (const auto& [name, v] : items_) n += static_cast<std::size_t>(v.value().size());
  return n;
}

void ParameterSet::extend(const ParameterSet& other, const std::string& prefix) {
  for (const auto& [n, v] : other.items_) {
    for (const auto& [m, w] : items_)
      if (m == prefix + n) throw ValidationError("parameter " + m + " registered twice");
    items_.emplace_back(prefix + n, v);
  }
}

void ParameterSet::zero_grad() {
  for (auto& [n, v] : items_) v.zero_grad();
}

void ParameterSet::assign(const ParameterSet& other) {
  if (other.items_.size() != items_.size()) throw ShapeError("parameter sets differ in size");
  for (std::size_t i = 0; i < items_.size(); ++i) {
    const auto& src = other.items_[i];
    auto& dst = items_[i];
    if (src.first != dst.first || src.second.rows() != dst.second.rows() ||
        src.second.cols() != dst.second.cols())
      throw ShapeError("parameter " + dst.first + " does not match " + src.first);
    dst.second.mutable_value() = src.second.value();
  }
}

Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

Linear::Linear(ParameterSet& ps, const std::string& name, int in, int out, std::mt19937_64& rng,
               bool with_bias) {
  weight = ps.add(name + ".weight", normal_matrix(in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng));
  if (with_bias) bias = ps.add(name + ".bias", Matrix::Zero(1, out));
}

Var Linear::operator()(const Var& x) const {
  auto y = matmul(x, weight);
  return bias.defined() ? add_row(y, bias) : y;
}

LayerNorm::LayerNorm(ParameterSet& ps, const std::string& name, int dim) {
  gamma = ps.add(name + ".gamma", Matrix::Ones(1, dim));
  beta = ps.add(name + ".beta", Matrix::Zero(1, dim));
}

FeedForward::FeedForward(ParameterSet& ps, const std::string& name, int dim, int hidden,
                         std::mt19937_64& rng)
    : in(ps, name + ".in", dim, hidden, rng), out(ps, name + ".out", hidden, dim, rng) {}

MultiHeadAttention::MultiHeadAttention(ParameterSet& ps, const std::string& name, int dim, int heads,
                                       std::mt19937_64& rng)
    : q(ps, name + ".q", dim, dim, rng),
      k(ps, name + ".k", dim, dim, rng),
      v(ps, name + ".v", dim, dim, rng),
      o(ps, name + ".o", dim, dim, rng),
      heads(heads) {
  if (heads <= 0 || dim % heads != 0)
    throw ValidationError("model dim " + std::to_string(dim) + " not divisible by " +
                          std::to_string(heads) + " heads");
}

Var MultiHeadAttention::operator()(const Var& queries, const Var& keys_values,
                                   std::span<const AttentionBlock> blocks) const {
  return o(attention(q(queries), k(keys_values), v(keys_values), heads, blocks));
}

TransformerLayer::TransformerLayer(ParameterSet& ps, const std::string& name, int dim, int heads,
                                   std::mt19937_64& rng)
    : ln_attn(ps, name + ".ln_attn", dim),
      ln_ffn(ps, name + ".ln_ffn", dim),
      attn(ps, name + ".attn", dim, heads, rng),
      ffn(ps, name + ".ffn", dim, 4 * dim, rng) {}

Var TransformerLayer::operator()(const Var& x, std::span<const AttentionBlock> blocks) const {
  auto h = ln_attn(x);
  auto y = add(x, attn(h, h, blocks));
  return add(y, ffn(ln_ffn(y)));
}

std::vector<AttentionBlock> block_diagonal(Eigen::Index count, Eigen::Index length, bool causal) {
  std::vector<AttentionBlock> blocks;
  blocks.reserve(static_cast<std::size_t>(count));
  for (Eigen::Index i = 0; i < count; ++i)
    blocks.push_back({i * length, (i + 1) * length, i * length, (i + 1) * length, causal});
  return blocks;
}

}  // namespace egoexo::nn
