#pragma once

#include <cstdint>
#include <span>

#include "egoexo/captioning/prompt.hpp"
#include "egoexo/nn/layers.hpp"

namespace egoexo::captioning {

struct DecoderConfig {
  int vocab_size = 0;
  int dim = 64;
  int layers = 2;
  int heads = 4;
  int max_len = 256;
  int gated_interval = 1;  // a gated block after every n-th base layer
  int visual_dim = 64;

  void validate() const;
};

/// Cross-attention from text to visual tokens whose attention and
/// feed-forward outputs are scaled by tanh of zero-initialized gates.
struct GatedCrossAttentionBlock {
  nn::LayerNorm ln_attn, ln_ffn;
  nn::Linear q, k, v, o;
  nn::FeedForward ffn;
  nn::Var gate_attn, gate_ffn;  // 1x1
  int heads = 1;

  GatedCrossAttentionBlock() = default;
  GatedCrossAttentionBlock(nn::ParameterSet& ps, const std::string& name, int dim, int visual_dim,
                           int heads, std::mt19937_64& rng);
  nn::Var operator()(const nn::Var& x, const nn::Var& visual,
                     std::span<const nn::AttentionBlock> blocks) const;
};

/// A batch of sequences stacked row-wise for one decoder pass. Sequence s
/// attends to visual clips starting at clip `visual_clip_offset[s]`.
struct DecoderBatch {
  std::vector<const PromptSequence*> sequences;
  std::vector<int> visual_clip_offset;
  int tokens_per_clip = 0;  // L
};

/// Small causal transformer language model with gated cross-attention
/// blocks interleaved after base layers.
class CaptionDecoder {
 public:
  CaptionDecoder(DecoderConfig cfg, std::uint64_t seed);

  const DecoderConfig& config() const { return cfg_; }
  nn::ParameterSet& base_params() { return base_; }
  nn::ParameterSet& gated_params() { return gated_; }
  const nn::ParameterSet& base_params() const { return base_; }
  const nn::ParameterSet& gated_params() const { return gated_; }
  std::vector<GatedCrossAttentionBlock>& gated_blocks() { return blocks_; }

  /// Logits (total rows) x vocab. Validates every chunk index against the
  /// number of visual clips available.
  nn::Var forward(const DecoderBatch& batch, const nn::Var& visual) const;
  nn::Var forward(const PromptSequence& prompt, const nn::Var& visual, int tokens_per_clip) const;
  /// The base language model alone (gated blocks skipped).
  nn::Var forward_base(const PromptSequence& prompt) const;

 private:
  nn::Var run(const DecoderBatch& batch, const nn::Var* visual) const;

  DecoderConfig cfg_;
  nn::ParameterSet base_, gated_;
  nn::Var token_embedding_, positions_;
  std::vector<nn::TransformerLayer> layers_;
  std::vector<GatedCrossAttentionBlock> blocks_;
  std::vector<int> block_after_;  // base layer index each gated block follows
  nn::LayerNorm final_norm_;
  nn::Linear output_;
};

}  // namespace egoexo::captioning
