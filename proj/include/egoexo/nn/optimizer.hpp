#pragma once

#include <vector>

#include "egoexo/nn/layers.hpp"

namespace egoexo::nn {

struct AdamWConfig {
  double lr = 3e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double clip_norm = 0.0;  // global gradient norm clip, 0 disables
};

/// Decoupled weight-decay Adam over a fixed parameter list.
class AdamW {
 public:
  AdamW(std::vector<Var> params, AdamWConfig cfg);
  /// Applies one update from the accumulated gradients and clears them.
  void step();
  std::size_t steps() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

 private:
  std::vector<Var> params_;
  std::vector<Matrix> m_, v_;
  AdamWConfig cfg_;
  std::size_t t_ = 0;
};

}  // namespace egoexo::nn
