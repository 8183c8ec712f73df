#include "egoexo/captioning/resampler.hpp"

#include "egoexo/errors.hpp"

namespace egoexo::captioning {

void ResamplerConfig::validate() const {
  if (query_count < 1) throw ValidationError("resampler needs at least one query token");
  if (depth < 1) throw ValidationError("resampler depth must be >= 1");
  if (dim <= 0 || heads <= 0 || dim % heads != 0)
    throw ValidationError("resampler dim must be divisible by heads");
  if (max_frames < 1) throw ValidationError("resampler max_frames must be >= 1");
}

PerceiverResampler::PerceiverResampler(ResamplerConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  queries_ = params_.add("resampler.queries", nn::normal_matrix(cfg_.query_count, cfg_.dim, 1.0, rng));
  positions_ = params_.add("resampler.positions", nn::normal_matrix(cfg_.max_frames, cfg_.dim, 0.02, rng));
  for (int l = 0; l < cfg_.depth; ++l) {
    const auto name = "resampler.layer" + std::to_string(l);
    Layer layer;
    layer.ln_media = nn::LayerNorm(params_, name + ".ln_media", cfg_.dim);
    layer.ln_query = nn::LayerNorm(params_, name + ".ln_query", cfg_.dim);
    layer.ln_ffn = nn::LayerNorm(params_, name + ".ln_ffn", cfg_.dim);
    layer.attn = nn::MultiHeadAttention(params_, name + ".attn", cfg_.dim, cfg_.heads, rng);
    layer.ffn = nn::FeedForward(params_, name + ".ffn", cfg_.dim, 4 * cfg_.dim, rng);
    layers_.push_back(std::move(layer));
  }
  final_norm_ = nn::LayerNorm(params_, "resampler.final_norm", cfg_.dim);
}

nn::Var PerceiverResampler::forward(const PatchFeatureGrid& grid) const {
  grid.validate();
  if (grid.dim != cfg_.dim)
    throw ShapeError("resampler: visual dim " + std::to_string(grid.dim) + " != " + std::to_string(cfg_.dim));
  const auto clips = static_cast<Eigen::Index>(grid.clip_count());
  const Eigen::Index L = cfg_.query_count;

  // Media tokens with temporal position added, per clip.
  std::vector<nn::Var> media;
  for (std::size_t c = 0; c < grid.clips.size(); ++c) {
    if (grid.frames[c] > cfg_.max_frames)
      throw ShapeError("resampler: " + std::to_string(grid.frames[c]) + " frames exceed max_frames " +
                       std::to_string(cfg_.max_frames));
    std::vector<int> pos;
    for (int t = 0; t < grid.frames[c]; ++t)
      for (int n = 0; n < grid.patches; ++n) pos.push_back(t);
    media.push_back(nn::add(nn::Var(grid.clips[c]), nn::gather_rows(positions_, pos)));
  }

  std::vector<int> query_ids;
  for (Eigen::Index c = 0; c < clips; ++c)
    for (Eigen::Index l = 0; l < L; ++l) query_ids.push_back(static_cast<int>(l));
  nn::Var q = nn::gather_rows(queries_, query_ids);

  for (const auto& layer : layers_) {
    auto qn = layer.ln_query(q);
    std::vector<nn::Var> keys;
    std::vector<nn::AttentionBlock> blocks;
    Eigen::Index offset = 0;
    for (Eigen::Index c = 0; c < clips; ++c) {
      keys.push_back(layer.ln_media(media[static_cast<std::size_t>(c)]));
      keys.push_back(nn::slice_rows(qn, c * L, L));
      const auto len = media[static_cast<std::size_t>(c)].rows() + L;
      blocks.push_back({c * L, (c + 1) * L, offset, offset + len, false});
      offset += len;
    }
    auto kv = nn::concat_rows(keys);
    q = nn::add(q, layer.attn(qn, kv, blocks));
    q = nn::add(q, layer.ffn(layer.ln_ffn(q)));
  }
  return final_norm_(q);
}

}  // namespace egoexo::captioning
