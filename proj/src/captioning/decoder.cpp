#include "egoexo/captioning/decoder.hpp"

#include "egoexo/errors.hpp"

namespace egoexo::captioning {

void DecoderConfig::validate() const {
  if (vocab_size <= Vocabulary::kReserved) throw ValidationError("decoder vocab_size too small");
  if (dim <= 0 || heads <= 0 || dim % heads != 0)
    throw ValidationError("decoder dim must be divisible by heads");
  if (layers < 1) throw ValidationError("decoder needs at least one layer");
  if (max_len < 2) throw ValidationError("decoder max_len must be >= 2");
  if (gated_interval < 1) throw ValidationError("gated_interval must be >= 1");
  if (visual_dim <= 0) throw ValidationError("decoder visual_dim must be positive");
}

GatedCrossAttentionBlock::GatedCrossAttentionBlock(nn::ParameterSet& ps, const std::string& name,
                                                   int dim, int visual_dim, int heads_,
                                                   std::mt19937_64& rng)
    : ln_attn(ps, name + ".ln_attn", dim),
      ln_ffn(ps, name + ".ln_ffn", dim),
      q(ps, name + ".q", dim, dim, rng),
      k(ps, name + ".k", visual_dim, dim, rng),
      v(ps, name + ".v", visual_dim, dim, rng),
      o(ps, name + ".o", dim, dim, rng),
      ffn(ps, name + ".ffn", dim, 4 * dim, rng),
      gate_attn(ps.add(name + ".gate_attn", nn::Matrix::Zero(1, 1))),
      gate_ffn(ps.add(name + ".gate_ffn", nn::Matrix::Zero(1, 1))),
      heads(heads_) {}

nn::Var GatedCrossAttentionBlock::operator()(const nn::Var& x, const nn::Var& visual,
                                              std::span<const nn::AttentionBlock> blocks) const {
  auto a = o(nn::attention(q(ln_attn(x)), k(visual), v(visual), heads, blocks));
  auto h = nn::add(x, nn::scale_by(a, nn::tanh(gate_attn)));
  return nn::add(h, nn::scale_by(ffn(ln_ffn(h)), nn::tanh(gate_ffn)));
}

CaptionDecoder::CaptionDecoder(DecoderConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  token_embedding_ = base_.add("decoder.token_embedding", nn::normal_matrix(cfg_.vocab_size, cfg_.dim, 0.02, rng));
  positions_ = base_.add("decoder.positions", nn::normal_matrix(cfg_.max_len, cfg_.dim, 0.02, rng));
  for (int l = 0; l < cfg_.layers; ++l) {
    layers_.emplace_back(base_, "decoder.layer" + std::to_string(l), cfg_.dim, cfg_.heads, rng);
    if ((l + 1) % cfg_.gated_interval == 0) {
      const auto name = "gated.block" + std::to_string(blocks_.size());
      blocks_.emplace_back(gated_, name, cfg_.dim, cfg_.visual_dim, cfg_.heads, rng);
      block_after_.push_back(l);
    }
  }
  final_norm_ = nn::LayerNorm(base_, "decoder.final_norm", cfg_.dim);
  output_ = nn::Linear(base_, "decoder.output", cfg_.dim, cfg_.vocab_size, rng);
}

nn::Var CaptionDecoder::run(const DecoderBatch& batch, const nn::Var* visual) const {
  if (batch.sequences.empty()) throw ShapeError("decoder: empty batch");
  if (visual && batch.visual_clip_offset.size() != batch.sequences.size())
    throw ShapeError("decoder: one visual offset per sequence is required");
  const Eigen::Index L = batch.tokens_per_clip;
  Eigen::Index available = 0;
  if (visual) {
    if (L < 1 || visual->rows() % L != 0)
      throw ShapeError("decoder: visual rows are not a multiple of tokens_per_clip");
    if (visual->cols() != cfg_.visual_dim)
      throw ShapeError("decoder: visual dim " + std::to_string(visual->cols()) + " != " +
                       std::to_string(cfg_.visual_dim));
    available = visual->rows() / L;
  }

  std::vector<int> ids, pos;
  std::vector<nn::AttentionBlock> self_blocks, cross_blocks;
  Eigen::Index offset = 0;
  for (std::size_t s = 0; s < batch.sequences.size(); ++s) {
    const auto& seq = *batch.sequences[s];
    const auto n = static_cast<Eigen::Index>(seq.size());
    if (n == 0) throw ShapeError("decoder: empty sequence");
    if (n > cfg_.max_len)
      throw ShapeError("decoder: sequence length " + std::to_string(n) + " exceeds max_len " +
                       std::to_string(cfg_.max_len));
    if (seq.chunk_map.size() != seq.size()) throw ShapeError("decoder: chunk map size mismatch");
    for (Eigen::Index p = 0; p < n; ++p) {
      const int id = seq.tokens[static_cast<std::size_t>(p)];
      if (id < 0 || id >= cfg_.vocab_size) throw ShapeError("decoder: token id out of range");
      ids.push_back(id);
      pos.push_back(static_cast<int>(p));
    }
    self_blocks.push_back({offset, offset + n, offset, offset + n, true});
    if (visual) {
      Eigen::Index p = 0;
      while (p < n) {
        const int chunk = seq.chunk_map[static_cast<std::size_t>(p)];
        Eigen::Index q = p;
        while (q < n && seq.chunk_map[static_cast<std::size_t>(q)] == chunk) ++q;
        if (chunk >= 0) {
          const Eigen::Index clip = batch.visual_clip_offset[s] + chunk;
          if (clip >= available)
            throw ValidationError("decoder: chunk " + std::to_string(chunk) + " has no visual clip");
          cross_blocks.push_back({offset + p, offset + q, clip * L, (clip + 1) * L, false});
        }
        p = q;
      }
    }
    offset += n;
  }

  auto x = nn::add(nn::gather_rows(token_embedding_, ids), nn::gather_rows(positions_, pos));
  std::size_t next_block = 0;
  for (int l = 0; l < cfg_.layers; ++l) {
    x = layers_[static_cast<std::size_t>(l)](x, self_blocks);
    if (next_block < blocks_.size() && block_after_[next_block] == l) {
      if (visual) x = blocks_[next_block](x, *visual, cross_blocks);
      ++next_block;
    }
  }
  return output_(final_norm_(x));
}

nn::Var CaptionDecoder::forward(const DecoderBatch& batch, const nn::Var& visual) const {
  return run(batch, &visual);
}

nn::Var CaptionDecoder::forward(const PromptSequence& prompt, const nn::Var& visual,
                                int tokens_per_clip) const {
  DecoderBatch batch{{&prompt}, {0}, tokens_per_clip};
  return run(batch, &visual);
}

nn::Var CaptionDecoder::forward_base(const PromptSequence& prompt) const {
  DecoderBatch batch{{&prompt}, {0}, 0};
  return run(batch, nullptr);
}

}  // namespace egoexo::captioning
