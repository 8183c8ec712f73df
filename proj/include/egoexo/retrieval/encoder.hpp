#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "egoexo/data/types.hpp"
#include "egoexo/nn/layers.hpp"

namespace egoexo::retrieval {

struct CrossViewEncoderConfig {
  int layers = 4;
  int model_dim = 768;
  int heads = 8;
  int max_frames = 32;

  void validate() const;
};

/// Trainable encoder shared by both views: frame features plus a learned
/// temporal position table go through transformer layers, are average-pooled
/// over time, projected and L2-normalized.
class CrossViewEncoder {
 public:
  CrossViewEncoder(CrossViewEncoderConfig cfg, std::uint64_t seed);

  const CrossViewEncoderConfig& config() const { return cfg_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }

  /// One unit row per clip. Each clip is T_i x model_dim with T_i <= max_frames.
  nn::Var forward(std::span<const nn::Matrix> clips) const;
  /// Single clip, all frames. Throws ShapeError on dim or frame-count mismatch.
  Eigen::VectorXd encode(const data::FeatureMatrix& frames) const;

 private:
  CrossViewEncoderConfig cfg_;
  nn::ParameterSet params_;
  nn::Var positions_;
  std::vector<nn::TransformerLayer> layers_;
  nn::LayerNorm final_norm_;
  nn::Linear projection_;
};

/// Frame features as a double matrix.
nn::Matrix to_matrix(const data::FrameMatrix& frames);

/// `count` distinct frame indices drawn uniformly, returned in temporal order;
/// all frames when T <= count.
std::vector<int> sample_frames(int frame_count, int count, std::mt19937_64& rng);
/// `count` evenly spaced frame indices (centre of each of `count` equal bins).
std::vector<int> even_frames(int frame_count, int count);
nn::Matrix select_frames(const data::FrameMatrix& frames, std::span<const int> indices);

enum class TextBackend { hashed, lookup };

struct TextAdapterConfig {
  TextBackend backend = TextBackend::hashed;
  int dim = 768;
  int buckets = 4096;  // hashed backend only
  bool trainable = true;
};

/// Text encoder: either a toy trainable token-hash bag-of-embeddings model or
/// a frozen feature lookup (with a trainable identity-initialized projection
/// when `trainable`). Outputs unit d-vectors.
class TextEncoderAdapter {
 public:
  static TextEncoderAdapter hashed(int dim, int buckets, std::uint64_t seed, bool trainable = true);
  static TextEncoderAdapter lookup(int dim, std::map<std::string, Eigen::VectorXd> table,
                                   bool trainable = true);

  const TextAdapterConfig& config() const { return cfg_; }
  bool trainable() const { return cfg_.trainable; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }

  nn::Var forward(std::span<const std::string> texts) const;
  Eigen::VectorXd encode(const std::string& text) const;

  /// Bucket ids for the hashed backend (FNV-1a of each normalized token).
  std::vector<int> bucket_ids(const std::string& text) const;

 private:
  TextEncoderAdapter() = default;

  TextAdapterConfig cfg_;
  nn::ParameterSet params_;
  nn::Var embedding_;
  nn::Linear projection_;
  std::shared_ptr<const std::map<std::string, Eigen::VectorXd>> table_;
};

std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace egoexo::retrieval
