#include "egoexo/retrieval/encoder.hpp"

#include <algorithm>
#include <numeric>

#include "egoexo/errors.hpp"
#include "egoexo/text/normalize.hpp"

namespace egoexo::retrieval {

void CrossViewEncoderConfig::validate() const {
  if (layers < 0) throw ValidationError("encoder layers must be >= 0");
  if (model_dim <= 0) throw ValidationError("model_dim must be positive");
  if (heads <= 0 || model_dim % heads != 0)
    throw ValidationError("model_dim " + std::to_string(model_dim) + " not divisible by heads " +
                          std::to_string(heads));
  if (max_frames <= 0) throw ValidationError("max_frames must be positive");
}

CrossViewEncoder::CrossViewEncoder(CrossViewEncoderConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  positions_ = params_.add("encoder.positions", nn::normal_matrix(cfg_.max_frames, cfg_.model_dim, 0.02, rng));
  for (int l = 0; l < cfg_.layers; ++l)
    layers_.emplace_back(params_, "encoder.layer" + std::to_string(l), cfg_.model_dim, cfg_.heads, rng);
  final_norm_ = nn::LayerNorm(params_, "encoder.final_norm", cfg_.model_dim);
  projection_ = nn::Linear(params_, "encoder.projection", cfg_.model_dim, cfg_.model_dim, rng);
}

nn::Var CrossViewEncoder::forward(std::span<const nn::Matrix> clips) const {
  if (clips.empty()) throw ShapeError("encoder: empty batch");
  Eigen::Index total = 0;
  std::vector<Eigen::Index> lengths;
  for (const auto& c : clips) {
    if (c.cols() != cfg_.model_dim)
      throw ShapeError("encoder: feature dim " + std::to_string(c.cols()) + " != model_dim " +
                       std::to_string(cfg_.model_dim));
    if (c.rows() < 1 || c.rows() > cfg_.max_frames)
      throw ShapeError("encoder: frame count " + std::to_string(c.rows()) + " outside [1, " +
                       std::to_string(cfg_.max_frames) + "]");
    lengths.push_back(c.rows());
    total += c.rows();
  }
  nn::Matrix stacked(total, cfg_.model_dim);
  std::vector<int> pos_ids;
  std::vector<nn::AttentionBlock> blocks;
  Eigen::Index r = 0;
  for (const auto& c : clips) {
    stacked.middleRows(r, c.rows()) = c;
    for (Eigen::Index t = 0; t < c.rows(); ++t) pos_ids.push_back(static_cast<int>(t));
    blocks.push_back({r, r + c.rows(), r, r + c.rows(), false});
    r += c.rows();
  }
  nn::Var x = nn::add(nn::Var(std::move(stacked)), nn::gather_rows(positions_, pos_ids));
  for (const auto& layer : layers_) x = layer(x, blocks);
  x = final_norm_(x);
  auto pooled = nn::segment_mean(x, lengths);
  return nn::l2_normalize_rows(projection_(pooled));
}

Eigen::VectorXd CrossViewEncoder::encode(const data::FeatureMatrix& frames) const {
  nn::Matrix m = to_matrix(frames.frames);
  auto out = forward(std::span<const nn::Matrix>(&m, 1));
  return out.value().row(0).transpose();
}

nn::Matrix to_matrix(const data::FrameMatrix& frames) { return frames.cast<double>(); }

std::vector<int> sample_frames(int frame_count, int count, std::mt19937_64& rng) {
  std::vector<int> all(static_cast<std::size_t>(frame_count));
  std::iota(all.begin(), all.end(), 0);
  if (frame_count <= count) return all;
  // Partial Fisher-Yates, then restore temporal order.
  for (int i = 0; i < count; ++i) {
    std::uniform_int_distribution<int> pick(i, frame_count - 1);
    std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(pick(rng))]);
  }
  all.resize(static_cast<std::size_t>(count));
  std::sort(all.begin(), all.end());
  return all;
}

std::vector<int> even_frames(int frame_count, int count) {
  std::vector<int> out;
  if (frame_count <= count) {
    for (int i = 0; i < frame_count; ++i) out.push_back(i);
    return out;
  }
  for (int k = 0; k < count; ++k)
    out.push_back(static_cast<int>((2 * k + 1) * static_cast<long long>(frame_count) / (2 * count)));
  return out;
}

nn::Matrix select_frames(const data::FrameMatrix& frames, std::span<const int> indices) {
  nn::Matrix out(static_cast<Eigen::Index>(indices.size()), frames.cols());
  for (std::size_t i = 0; i < indices.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = frames.row(indices[i]).cast<double>();
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

TextEncoderAdapter TextEncoderAdapter::hashed(int dim, int buckets, std::uint64_t seed, bool trainable) {
  if (dim <= 0 || buckets <= 0) throw ValidationError("text adapter needs positive dim and buckets");
  TextEncoderAdapter a;
  a.cfg_ = {TextBackend::hashed, dim, buckets, trainable};
  std::mt19937_64 rng(seed);
  a.embedding_ = a.params_.add("text.embedding", nn::normal_matrix(buckets, dim, 1.0, rng));
  a.projection_ = nn::Linear(a.params_, "text.projection", dim, dim, rng);
  return a;
}

TextEncoderAdapter TextEncoderAdapter::lookup(int dim, std::map<std::string, Eigen::VectorXd> table,
                                              bool trainable) {
  if (dim <= 0) throw ValidationError("text adapter needs positive dim");
  for (const auto& [k, v] : table)
    if (v.size() != dim) throw ShapeError("lookup feature for \"" + k + "\" has wrong dim");
  TextEncoderAdapter a;
  a.cfg_ = {TextBackend::lookup, dim, 0, trainable};
  a.table_ = std::make_shared<const std::map<std::string, Eigen::VectorXd>>(std::move(table));
  if (trainable) {
    a.projection_.weight = a.params_.add("text.projection.weight", nn::Matrix::Identity(dim, dim));
    a.projection_.bias = a.params_.add("text.projection.bias", nn::Matrix::Zero(1, dim));
  }
  return a;
}

std::vector<int> TextEncoderAdapter::bucket_ids(const std::string& text) const {
  std::vector<int> ids;
  for (const auto& tok : text::word_tokens(text::normalize_caption(text)))
    ids.push_back(static_cast<int>(fnv1a64(tok) % static_cast<std::uint64_t>(cfg_.buckets)));
  if (ids.empty()) ids.push_back(static_cast<int>(fnv1a64("") % static_cast<std::uint64_t>(cfg_.buckets)));
  return ids;
}

nn::Var TextEncoderAdapter::forward(std::span<const std::string> texts) const {
  if (texts.empty()) throw ShapeError("text adapter: empty batch");
  if (cfg_.backend == TextBackend::lookup) {
    nn::Matrix feats(static_cast<Eigen::Index>(texts.size()), cfg_.dim);
    for (std::size_t i = 0; i < texts.size(); ++i) {
      auto it = table_->find(texts[i]);
      if (it == table_->end()) throw ValidationError("no text feature for \"" + texts[i] + "\"");
      feats.row(static_cast<Eigen::Index>(i)) = it->second.transpose();
    }
    nn::Var x(std::move(feats));
    if (cfg_.trainable) x = projection_(x);
    return nn::l2_normalize_rows(x);
  }
  std::vector<int> ids;
  std::vector<Eigen::Index> lengths;
  for (const auto& t : texts) {
    auto b = bucket_ids(t);
    lengths.push_back(static_cast<Eigen::Index>(b.size()));
    ids.insert(ids.end(), b.begin(), b.end());
  }
  auto pooled = nn::segment_mean(nn::gather_rows(embedding_, ids), lengths);
  return nn::l2_normalize_rows(projection_(pooled));
}

Eigen::VectorXd TextEncoderAdapter::encode(const std::string& text) const {
  return forward(std::span<const std::string>(&text, 1)).value().row(0).transpose();
}

}  // namespace egoexo::retrieval
