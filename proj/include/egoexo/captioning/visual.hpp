#pragma once

#include <cstdint>
#include <vector>

#include "egoexo/data/types.hpp"
#include "egoexo/nn/autograd.hpp"

namespace egoexo::captioning {

/// Dense per-frame patch features for K exo clips followed by the ego clip.
/// Each clip matrix is (T * N) x d_v, frame-major.
struct PatchFeatureGrid {
  std::vector<nn::Matrix> clips;
  std::vector<int> frames;  // T per clip
  int patches = 0;          // N
  int dim = 0;              // d_v

  std::size_t clip_count() const { return clips.size(); }
  void validate() const;
};

/// Frozen visual encoder turning stored frame features into patch tokens.
class PatchFeatureProvider {
 public:
  virtual ~PatchFeatureProvider() = default;
  virtual int patch_count() const = 0;
  virtual int dim() const = 0;
  /// (T * N) x d_v for one clip.
  virtual nn::Matrix patches(const nn::Matrix& frame_features) const = 0;
};

/// Fixed random projection: patch n of frame t is tanh(f_t W_n), W_n drawn
/// once from N(0, 1/feature_dim) with the given seed.
class RandomProjectionPatchEmbedder final : public PatchFeatureProvider {
 public:
  RandomProjectionPatchEmbedder(int feature_dim, int patches, int dim, std::uint64_t seed);

  int patch_count() const override { return patches_; }
  int dim() const override { return dim_; }
  nn::Matrix patches(const nn::Matrix& frame_features) const override;

 private:
  int feature_dim_, patches_, dim_;
  nn::Matrix projection_;  // feature_dim x (patches * dim)
};

PatchFeatureGrid make_grid(const PatchFeatureProvider& provider,
                           const std::vector<nn::Matrix>& clip_frames);

}  // namespace egoexo::captioning
