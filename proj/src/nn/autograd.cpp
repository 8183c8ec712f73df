#include "egoexo/nn/autograd.hpp"

#include <cmath>
#include <limits>
#include <unordered_set>

#include "egoexo/errors.hpp"

namespace egoexo::nn {
namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
}

Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

}  // namespace

Var::Var(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Matrix Var::grad() const {
  if (node_->grad.size() == 0) return Matrix::Zero(rows(), cols());
  return node_->grad;
}

Var Var::make(Matrix value, std::vector<Var> inputs, std::function<void(Node&)> backward) {
  Var out(std::move(value));
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (any) {
    out.node_->requires_grad = true;
    out.node_->parents.reserve(inputs.size());
    for (auto& in : inputs) out.node_->parents.push_back(in.node_);
    out.node_->backward = std::move(backward);
  }
  return out;
}

void backward(const Var& root) {
  if (root.rows() != 1 || root.cols() != 1) throw ShapeError("backward: root must be 1x1");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS for a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size() != 0) n->backward(*n);
  }
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions " + std::to_string(a.cols()) + " and " +
                     std::to_string(b.rows()));
  return Var::make(a.value() * b.value(), {a, b}, [](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    if (pa.requires_grad) pa.accumulate(self.grad * pb.value.transpose());
    if (pb.requires_grad) pb.accumulate(pa.value.transpose() * self.grad);
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  return Var::make(a.value() + b.value(), {a, b}, [](Node& self) {
    for (auto& p : self.parents)
      if (p->requires_grad) p->accumulate(self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  return Var::make(a.value() - b.value(), {a, b}, [](Node& self) {
    if (parent(self, 0).requires_grad) parent(self, 0).accumulate(self.grad);
    if (parent(self, 1).requires_grad) parent(self, 1).accumulate(-self.grad);
  });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("add_row: row must be 1 x cols");
  Matrix v = a.value();
  v.rowwise() += row.value().row(0);
  return Var::make(std::move(v), {a, row}, [](Node& self) {
    if (parent(self, 0).requires_grad) parent(self, 0).accumulate(self.grad);
    if (parent(self, 1).requires_grad) parent(self, 1).accumulate(self.grad.colwise().sum());
  });
}

Var scale(const Var& a, double s) {
  return Var::make(a.value() * s, {a}, [s](Node& self) { parent(self, 0).accumulate(self.grad * s); });
}

Var hadamard(const Var& a, const Var& b) {
  require_same_shape(a, b, "hadamard");
  return Var::make(a.value().cwiseProduct(b.value()), {a, b}, [](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    if (pa.requires_grad) pa.accumulate(self.grad.cwiseProduct(pb.value));
    if (pb.requires_grad) pb.accumulate(self.grad.cwiseProduct(pa.value));
  });
}

Var scale_by(const Var& a, const Var& s) {
  if (s.rows() != 1 || s.cols() != 1) throw ShapeError("scale_by: scale must be 1x1");
  return Var::make(a.value() * s.scalar(), {a, s}, [](Node& self) {
    Node& pa = parent(self, 0);
    Node& ps = parent(self, 1);
    if (pa.requires_grad) pa.accumulate(self.grad * ps.value(0, 0));
    if (ps.requires_grad) ps.accumulate(Matrix::Constant(1, 1, self.grad.cwiseProduct(pa.value).sum()));
  });
}

Var tanh(const Var& a) {
  Matrix y = a.value().array().tanh().matrix();
  return Var::make(y, {a}, [y](Node& self) {
    parent(self, 0).accumulate(self.grad.cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

Var gelu(const Var& a) {
  // tanh approximation
  static constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  const Matrix& x = a.value();
  Matrix inner = (c * (x.array() + 0.044715 * x.array().cube())).matrix();
  Matrix t = inner.array().tanh().matrix();
  Matrix y = (0.5 * x.array() * (1.0 + t.array())).matrix();
  return Var::make(std::move(y), {a}, [t](Node& self) {
    const Matrix& xv = parent(self, 0).value;
    auto dinner = c * (1.0 + 3.0 * 0.044715 * xv.array().square());
    auto dy = 0.5 * (1.0 + t.array()) + 0.5 * xv.array() * (1.0 - t.array().square()) * dinner;
    parent(self, 0).accumulate(self.grad.cwiseProduct(dy.matrix()));
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const auto n = x.rows();
  const auto d = x.cols();
  if (gamma.cols() != d || beta.cols() != d || gamma.rows() != 1 || beta.rows() != 1)
    throw ShapeError("layer_norm: gamma/beta must be 1 x cols");
  Matrix xhat(n, d);
  Eigen::VectorXd inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = x.value().row(i).mean();
    const double var = (x.value().row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (x.value().row(i).array() - mu) * inv_std(i);
  }
  Matrix y = xhat;
  y.array().rowwise() *= gamma.value().row(0).array();
  y.rowwise() += beta.value().row(0);
  return Var::make(std::move(y), {x, gamma, beta}, [xhat, inv_std](Node& self) {
    Node& px = parent(self, 0);
    Node& pg = parent(self, 1);
    Node& pb = parent(self, 2);
    const Matrix& g = self.grad;
    if (pg.requires_grad) pg.accumulate(g.cwiseProduct(xhat).colwise().sum());
    if (pb.requires_grad) pb.accumulate(g.colwise().sum());
    if (px.requires_grad) {
      Matrix dxhat = g;
      dxhat.array().rowwise() *= pg.value.row(0).array();
      const double d = static_cast<double>(g.cols());
      Matrix dx(g.rows(), g.cols());
      for (Eigen::Index i = 0; i < g.rows(); ++i) {
        const double mean_d = dxhat.row(i).sum() / d;
        const double mean_dx = dxhat.row(i).dot(xhat.row(i)) / d;
        dx.row(i) = inv_std(i) * (dxhat.row(i).array() - mean_d - xhat.row(i).array() * mean_dx);
      }
      px.accumulate(dx);
    }
  });
}

Var l2_normalize_rows(const Var& x) {
  Eigen::VectorXd norms = x.value().rowwise().norm();
  for (Eigen::Index i = 0; i < norms.size(); ++i) norms(i) = std::max(norms(i), 1e-12);
  Matrix y = x.value().array().colwise() / norms.array();
  return Var::make(y, {x}, [y, norms](Node& self) {
    const Matrix& g = self.grad;
    Eigen::VectorXd dots = (g.cwiseProduct(y)).rowwise().sum();
    Matrix dx = g - (y.array().colwise() * dots.array()).matrix();
    dx.array().colwise() /= norms.array();
    parent(self, 0).accumulate(dx);
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Eigen::Index rows = 0;
  const auto cols = parts[0].cols();
  for (const auto& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix v(rows, cols);
  std::vector<Eigen::Index> offsets;
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    offsets.push_back(r);
    v.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return Var::make(std::move(v), std::vector<Var>(parts.begin(), parts.end()), [offsets](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      Node& p = *self.parents[i];
      if (p.requires_grad) p.accumulate(self.grad.middleRows(offsets[i], p.value.rows()));
    }
  });
}

Var slice_rows(const Var& x, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > x.rows()) throw ShapeError("slice_rows: out of range");
  return Var::make(x.value().middleRows(begin, count), {x}, [begin, count](Node& self) {
    Node& p = parent(self, 0);
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    g.middleRows(begin, count) = self.grad;
    p.accumulate(g);
  });
}

Var gather_rows(const Var& table, std::span<const int> ids) {
  Matrix v(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows())
      throw ShapeError("gather_rows: index " + std::to_string(ids[i]) + " out of range");
    v.row(static_cast<Eigen::Index>(i)) = table.value().row(ids[i]);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return Var::make(std::move(v), {table}, [idx](Node& self) {
    Node& p = parent(self, 0);
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += self.grad.row(static_cast<Eigen::Index>(i));
    p.accumulate(g);
  });
}

Var segment_mean(const Var& x, std::span<const Eigen::Index> lengths) {
  Eigen::Index total = 0;
  for (auto l : lengths) {
    if (l <= 0) throw ShapeError("segment_mean: empty segment");
    total += l;
  }
  if (total != x.rows()) throw ShapeError("segment_mean: lengths do not cover input rows");
  Matrix v(static_cast<Eigen::Index>(lengths.size()), x.cols());
  Eigen::Index r = 0;
  for (std::size_t s = 0; s < lengths.size(); ++s) {
    v.row(static_cast<Eigen::Index>(s)) = x.value().middleRows(r, lengths[s]).colwise().mean();
    r += lengths[s];
  }
  std::vector<Eigen::Index> lens(lengths.begin(), lengths.end());
  return Var::make(std::move(v), {x}, [lens](Node& self) {
    Node& p = parent(self, 0);
    Matrix g(p.value.rows(), p.value.cols());
    Eigen::Index r = 0;
    for (std::size_t s = 0; s < lens.size(); ++s) {
      const auto row = self.grad.row(static_cast<Eigen::Index>(s)) / static_cast<double>(lens[s]);
      for (Eigen::Index k = 0; k < lens[s]; ++k) g.row(r + k) = row;
      r += lens[s];
    }
    p.accumulate(g);
  });
}

Var attention(const Var& q, const Var& k, const Var& v, int heads,
              std::span<const AttentionBlock> blocks) {
  const auto d = q.cols();
  if (k.cols() != d || v.cols() != d || k.rows() != v.rows())
    throw ShapeError("attention: q/k/v shape mismatch");
  if (heads <= 0 || d % heads != 0) throw ShapeError("attention: dim not divisible by heads");
  const Eigen::Index dh = d / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  for (const auto& b : blocks) {
    if (b.q_begin < 0 || b.q_end > q.rows() || b.q_begin > b.q_end || b.k_begin < 0 ||
        b.k_end > k.rows() || b.k_begin >= b.k_end)
      throw ShapeError("attention: block out of range");
  }

  std::vector<AttentionBlock> layout(blocks.begin(), blocks.end());
  std::vector<Matrix> probs;  // per (block, head)
  probs.reserve(layout.size() * static_cast<std::size_t>(heads));
  Matrix out = Matrix::Zero(q.rows(), d);
  constexpr double neg_inf = -std::numeric_limits<double>::infinity();

  for (const auto& b : layout) {
    const auto nq = b.q_end - b.q_begin;
    const auto nk = b.k_end - b.k_begin;
    const auto shift = nk - nq;
    for (int h = 0; h < heads; ++h) {
      if (nq == 0) {
        probs.emplace_back();
        continue;
      }
      auto Qh = q.value().block(b.q_begin, h * dh, nq, dh);
      auto Kh = k.value().block(b.k_begin, h * dh, nk, dh);
      auto Vh = v.value().block(b.k_begin, h * dh, nk, dh);
      Matrix s = (Qh * Kh.transpose()) * sc;
      if (b.causal) {
        for (Eigen::Index i = 0; i < nq; ++i)
          for (Eigen::Index j = std::max<Eigen::Index>(0, i + shift + 1); j < nk; ++j) s(i, j) = neg_inf;
      }
      for (Eigen::Index i = 0; i < nq; ++i) {
        const double mx = s.row(i).maxCoeff();
        if (!std::isfinite(mx)) {
          s.row(i).setZero();
          continue;
        }
        s.row(i) = (s.row(i).array() - mx).exp().matrix();
        s.row(i) /= s.row(i).sum();
      }
      out.block(b.q_begin, h * dh, nq, dh).noalias() += s * Vh;
      probs.push_back(std::move(s));
    }
  }

  return Var::make(std::move(out), {q, k, v}, [layout, probs, heads, dh, sc](Node& self) {
    Node& pq = parent(self, 0);
    Node& pk = parent(self, 1);
    Node& pv = parent(self, 2);
    Matrix dq = Matrix::Zero(pq.value.rows(), pq.value.cols());
    Matrix dk = Matrix::Zero(pk.value.rows(), pk.value.cols());
    Matrix dv = Matrix::Zero(pv.value.rows(), pv.value.cols());
    std::size_t idx = 0;
    for (const auto& b : layout) {
      const auto nq = b.q_end - b.q_begin;
      const auto nk = b.k_end - b.k_begin;
      for (int h = 0; h < heads; ++h, ++idx) {
        if (nq == 0) continue;
        const Matrix& p = probs[idx];
        auto dO = self.grad.block(b.q_begin, h * dh, nq, dh);
        auto Qh = pq.value.block(b.q_begin, h * dh, nq, dh);
        auto Kh = pk.value.block(b.k_begin, h * dh, nk, dh);
        auto Vh = pv.value.block(b.k_begin, h * dh, nk, dh);
        Matrix dp = dO * Vh.transpose();
        dv.block(b.k_begin, h * dh, nk, dh).noalias() += p.transpose() * dO;
        Eigen::VectorXd rs = dp.cwiseProduct(p).rowwise().sum();
        Matrix ds = p.cwiseProduct((dp.colwise() - rs));
        dq.block(b.q_begin, h * dh, nq, dh).noalias() += (ds * Kh) * sc;
        dk.block(b.k_begin, h * dh, nk, dh).noalias() += (ds.transpose() * Qh) * sc;
      }
    }
    if (pq.requires_grad) pq.accumulate(dq);
    if (pk.requires_grad) pk.accumulate(dk);
    if (pv.requires_grad) pv.accumulate(dv);
  });
}

Var masked_cross_entropy(const Var& logits, std::span<const int> targets,
                         std::span<const bool> mask) {
  const auto n = logits.rows();
  if (static_cast<Eigen::Index>(targets.size()) != n || static_cast<Eigen::Index>(mask.size()) != n)
    throw ShapeError("masked_cross_entropy: targets/mask length must equal logits rows");
  Matrix grad = Matrix::Zero(n, logits.cols());
  double loss = 0.0;
  std::size_t count = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    const int t = targets[static_cast<std::size_t>(i)];
    if (t < 0 || t >= logits.cols()) throw ShapeError("masked_cross_entropy: target out of range");
    const auto row = logits.value().row(i);
    const double mx = row.maxCoeff();
    Eigen::RowVectorXd e = (row.array() - mx).exp().matrix();
    const double z = e.sum();
    loss += std::log(z) + mx - row(t);
    grad.row(i) = e / z;
    grad(i, t) -= 1.0;
    ++count;
  }
  if (count > 0) {
    loss /= static_cast<double>(count);
    grad /= static_cast<double>(count);
  }
  return Var::make(Matrix::Constant(1, 1, loss), {logits}, [grad](Node& self) {
    parent(self, 0).accumulate(grad * self.grad(0, 0));
  });
}

Var weighted_sum(const Var& x, const Matrix& weights) {
  if (weights.rows() != x.rows() || weights.cols() != x.cols()) throw ShapeError("weighted_sum: shape");
  return Var::make(Matrix::Constant(1, 1, x.value().cwiseProduct(weights).sum()), {x},
                   [weights](Node& self) { parent(self, 0).accumulate(weights * self.grad(0, 0)); });
}

Var scalar_with_gradients(double value, std::vector<Var> inputs, std::vector<Matrix> grads) {
  if (inputs.size() != grads.size()) throw ShapeError("scalar_with_gradients: arity mismatch");
  for (std::size_t i = 0; i < inputs.size(); ++i)
    if (inputs[i].rows() != grads[i].rows() || inputs[i].cols() != grads[i].cols())
      throw ShapeError("scalar_with_gradients: gradient shape mismatch");
  return Var::make(Matrix::Constant(1, 1, value), std::move(inputs),
                   [grads = std::move(grads)](Node& self) {
                     for (std::size_t i = 0; i < self.parents.size(); ++i)
                       if (self.parents[i]->requires_grad)
                         self.parents[i]->accumulate(grads[i] * self.grad(0, 0));
                   });
}

}  // namespace egoexo::nn
