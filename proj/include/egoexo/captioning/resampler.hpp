#pragma once

#include <cstdint>

#include "egoexo/captioning/visual.hpp"
#include "egoexo/nn/layers.hpp"

namespace egoexo::captioning {

struct ResamplerConfig {
  int query_count = 64;
  int depth = 6;
  int dim = 1024;
  int heads = 8;
  int max_frames = 32;

  void validate() const;
};

/// Learned queries cross-attend, per clip, to that clip's patch tokens plus
/// temporal position concatenated with the queries themselves. Output is
/// exactly `query_count` rows per clip.
class PerceiverResampler {
 public:
  PerceiverResampler(ResamplerConfig cfg, std::uint64_t seed);

  const ResamplerConfig& config() const { return cfg_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }
  nn::Var queries() const { return queries_; }

  /// (clips * L) x dim, clip-major.
  nn::Var forward(const PatchFeatureGrid& grid) const;

 private:
  struct Layer {
    nn::LayerNorm ln_media, ln_query, ln_ffn;
    nn::MultiHeadAttention attn;
    nn::FeedForward ffn;
  };

  ResamplerConfig cfg_;
  nn::ParameterSet params_;
  nn::Var queries_;
  nn::Var positions_;
  std::vector<Layer> layers_;
  nn::LayerNorm final_norm_;
};

}  // namespace egoexo::captioning
