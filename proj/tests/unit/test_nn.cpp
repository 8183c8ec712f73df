#include <doctest.h>

#include <functional>
#include <random>

#include "egoexo/errors.hpp"
#include "egoexo/nn/autograd.hpp"
#include "egoexo/nn/checkpoint.hpp"
#include "egoexo/nn/layers.hpp"
#include "egoexo/nn/optimizer.hpp"
#include "support/temp_dir.hpp"

using namespace egoexo;
using namespace egoexo::nn;

namespace {

Matrix randn(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double s = 1.0) {
  return normal_matrix(r, c, s, rng);
}

/// Max relative error between backprop and central differences of
/// sum(f(inputs) .* W).
double fd_error(const std::function<Var(std::vector<Var>&)>& f, std::vector<Matrix> init, std::mt19937_64& rng,
                double h = 1e-5) {
  std::vector<Var> vars;
  for (auto& m : init) vars.emplace_back(m, true);
  const Var out = f(vars);
  const Matrix w = randn(out.rows(), out.cols(), rng);
  backward(weighted_sum(out, w));
  double worst = 0;
  for (std::size_t i = 0; i < vars.size(); ++i) {
    const Matrix g = vars[i].grad();
    for (Eigen::Index k = 0; k < init[i].size(); ++k) {
      auto eval = [&](double delta) {
        std::vector<Var> probe;
        for (std::size_t j = 0; j < init.size(); ++j) {
          Matrix m = init[j];
          if (j == i) m.data()[k] += delta;
          probe.emplace_back(m, false);
        }
        return f(probe).value().cwiseProduct(w).sum();
      };
      const double num = (eval(h) - eval(-h)) / (2 * h);
      const double ana = g.data()[k];
      worst = std::max(worst, std::abs(num - ana) / std::max(1.0, std::abs(num) + std::abs(ana)));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("elementwise and linear ops back-propagate correctly") {
  std::mt19937_64 rng(1);
  const double tol = 1e-6;
  CHECK(fd_error([](auto& v) { return matmul(v[0], v[1]); }, {randn(3, 4, rng), randn(4, 2, rng)}, rng) < tol);
  CHECK(fd_error([](auto& v) { return add(v[0], v[1]); }, {randn(3, 4, rng), randn(3, 4, rng)}, rng) < tol);
  CHECK(fd_error([](auto& v) { return sub(v[0], v[1]); }, {randn(3, 4, rng), randn(3, 4, rng)}, rng) < tol);
  CHECK(fd_error([](auto& v) { return add_row(v[0], v[1]); }, {randn(3, 4, rng), randn(1, 4, rng)}, rng) < tol);
  CHECK(fd_error([](auto& v) { return scale(v[0], -2.5); }, {randn(2, 3, rng)}, rng) < tol);
  CHECK(fd_error([](auto& v) { return hadamard(v[0], v[1]); }, {randn(3, 2, rng), randn(3, 2, rng)}, rng) < tol);
  CHECK(fd_error([](auto& v) { return scale_by(v[0], v[1]); }, {randn(3, 2, rng), randn(1, 1, rng)}, rng) < tol);
  CHECK(fd_error([](auto& v) { return tanh(v[0]); }, {randn(3, 3, rng)}, rng) < tol);
  CHECK(fd_error([](auto& v) { return gelu(v[0]); }, {randn(3, 3, rng)}, rng) < tol);
  CHECK(fd_error([](auto& v) { return l2_normalize_rows(v[0]); }, {randn(4, 5, rng)}, rng) < tol);
  CHECK(fd_error([](auto& v) { return layer_norm(v[0], v[1], v[2]); },
                 {randn(4, 6, rng), randn(1, 6, rng), randn(1, 6, rng)}, rng) < tol);
}

TEST_CASE("shape ops back-propagate correctly") {
  std::mt19937_64 rng(2);
  const double tol = 1e-6;
  CHECK(fd_error(
            [](auto& v) {
              std::vector<Var> parts{v[0], v[1]};
              return concat_rows(parts);
            },
            {randn(2, 3, rng), randn(3, 3, rng)}, rng) < tol);
  CHECK(fd_error([](auto& v) { return slice_rows(v[0], 1, 2); }, {randn(4, 3, rng)}, rng) < tol);
  CHECK(fd_error(
            [](auto& v) {
              const int ids[] = {2, 0, 2, 1};
              return gather_rows(v[0], ids);
            },
            {randn(3, 4, rng)}, rng) < tol);
  CHECK(fd_error(
            [](auto& v) {
              const Eigen::Index lengths[] = {2, 1, 3};
              return segment_mean(v[0], lengths);
            },
            {randn(6, 3, rng)}, rng) < tol);
}

TEST_CASE("attention and cross-entropy back-propagate correctly") {
  std::mt19937_64 rng(3);
  const std::vector<AttentionBlock> blocks = {{0, 3, 0, 3, true}, {3, 5, 3, 7, false}};
  CHECK(fd_error([&](auto& v) { return attention(v[0], v[1], v[2], 2, blocks); },
                 {randn(5, 4, rng), randn(7, 4, rng), randn(7, 4, rng)}, rng) < 1e-6);
  const int targets[] = {1, 0, 3, 2};
  const bool mask[] = {true, false, true, true};
  CHECK(fd_error([&](auto& v) { return masked_cross_entropy(v[0], targets, mask); }, {randn(4, 5, rng)}, rng) < 1e-6);
}

TEST_CASE("attention respects blocks and causality") {
  std::mt19937_64 rng(4);
  const Var q(randn(4, 4, rng)), k(randn(4, 4, rng)), v(randn(4, 4, rng));
  const std::vector<AttentionBlock> causal = {{0, 4, 0, 4, true}};
  const Matrix full = attention(q, k, v, 2, causal).value();
  // row 0 only sees key 0, so it equals v's first row
  CHECK((full.row(0) - v.value().row(0)).norm() < 1e-12);
  // rows outside any block are zero
  const std::vector<AttentionBlock> partial = {{1, 3, 0, 4, false}};
  const Matrix out = attention(q, k, v, 1, partial).value();
  CHECK(out.row(0).norm() == 0.0);
  CHECK(out.row(3).norm() == 0.0);
  // changing a future key leaves causal outputs of earlier rows untouched
  Matrix v2 = v.value();
  v2.row(3).setConstant(9.0);
  const Matrix changed = attention(q, k, Var(v2), 2, causal).value();
  CHECK((changed.topRows(3) - full.topRows(3)).norm() == 0.0);
}

TEST_CASE("masked cross entropy with nothing selected is zero") {
  const Var logits(Matrix::Ones(2, 3), true);
  const int t[] = {0, 1};
  const bool m[] = {false, false};
  const Var loss = masked_cross_entropy(logits, t, m);
  CHECK(loss.scalar() == 0.0);
  backward(loss);
  CHECK(logits.grad().norm() == 0.0);
}

TEST_CASE("AdamW takes a bias-corrected step and decays weights") {
  Var p(Matrix::Constant(1, 1, 2.0), true);
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.5;
  AdamW opt({p}, cfg);
  backward(weighted_sum(p, Matrix::Constant(1, 1, 3.0)));
  opt.step();
  // first step: m_hat / sqrt(v_hat) = sign(g) = 1, decay 2 * 0.1 * 0.5
  CHECK(p.value()(0, 0) == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0 - 0.1 * 3.0 / (3.0 + 1e-8)).epsilon(1e-12));
  CHECK_FALSE(p.has_grad());
  CHECK(opt.steps() == 1);
}

TEST_CASE("AdamW minimizes a quadratic") {
  std::mt19937_64 rng(5);
  const Matrix target = randn(3, 3, rng);
  Var p(Matrix::Zero(3, 3), true);
  AdamWConfig cfg;
  cfg.lr = 0.05;
  cfg.weight_decay = 0;
  AdamW opt({p}, cfg);
  for (int i = 0; i < 500; ++i) {
    const Var d = sub(p, Var(target));
    backward(weighted_sum(hadamard(d, d), Matrix::Ones(3, 3)));
    opt.step();
  }
  CHECK((p.value() - target).norm() < 1e-2);
}

TEST_CASE("gradient clipping bounds the update direction") {
  Var p(Matrix::Zero(1, 2), true);
  AdamWConfig cfg;
  cfg.lr = 1.0;
  cfg.weight_decay = 0;
  cfg.clip_norm = 1e-3;
  AdamW opt({p}, cfg);
  Matrix w(1, 2);
  w << 300.0, -400.0;
  backward(weighted_sum(p, w));
  opt.step();
  CHECK(std::isfinite(p.value()(0, 0)));
  CHECK(p.value()(0, 0) < 0);
  CHECK(p.value()(0, 1) > 0);
}

TEST_CASE("checkpoint round trip and restore checks") {
  std::mt19937_64 rng(6);
  ParameterSet ps;
  ps.add("a", randn(2, 3, rng));
  ps.add("b.c", randn(1, 4, rng));
  const auto ck = Checkpoint::from(ps, R"({"k":1})");
  testutil::TempDir dir;
  ck.save(dir / "x.ck");
  const auto back = Checkpoint::load(dir / "x.ck");
  CHECK(back.config_json == R"({"k":1})");
  CHECK(back.encode() == ck.encode());

  ParameterSet other;
  other.add("a", Matrix::Zero(2, 3));
  other.add("b.c", Matrix::Zero(1, 4));
  back.restore(other);
  CHECK(other.find("a").value().cast<float>() == ps.find("a").value().cast<float>());

  ParameterSet wrong_shape;
  wrong_shape.add("a", Matrix::Zero(3, 2));
  wrong_shape.add("b.c", Matrix::Zero(1, 4));
  CHECK_THROWS_AS(back.restore(wrong_shape), FormatError);
  ParameterSet missing;
  missing.add("zzz", Matrix::Zero(1, 1));
  CHECK_THROWS_AS(back.restore(missing), FormatError);

  auto bytes = ck.encode();
  bytes[1] = 'X';
  CHECK_THROWS_AS(Checkpoint::decode(bytes), FormatError);
  bytes = ck.encode();
  bytes.resize(bytes.size() - 1);
  CHECK_THROWS_AS(Checkpoint::decode(bytes), CorruptionError);
}

TEST_CASE("parameter set names are unique and extend prefixes") {
  ParameterSet a;
  a.add("w", Matrix::Zero(1, 1));
  CHECK_THROWS_AS(a.add("w", Matrix::Zero(1, 1)), ValidationError);
  ParameterSet b;
  b.extend(a, "enc.");
  CHECK(b.find("enc.w").defined());
  CHECK(b.count() == 1);
}

TEST_CASE("transformer layer keeps sequences in a block-diagonal batch apart") {
  std::mt19937_64 rng(7);
  ParameterSet ps;
  TransformerLayer layer(ps, "l", 8, 2, rng);
  const Matrix x = randn(6, 8, rng);
  const auto blocks = block_diagonal(2, 3);
  const Matrix both = layer(Var(x), blocks).value();
  const auto one = block_diagonal(1, 3);
  const Matrix first = layer(Var(Matrix(x.topRows(3))), one).value();
  CHECK((both.topRows(3) - first).norm() < 1e-12);
}
