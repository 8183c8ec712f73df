#include "egoexo/captioning/visual.hpp"

#include <cmath>
#include <random>

#include "egoexo/errors.hpp"
#include "egoexo/nn/layers.hpp"

namespace egoexo::captioning {

void PatchFeatureGrid::validate() const {
  if (clips.empty()) throw ShapeError("patch grid: no clips (the ego clip is required)");
  if (frames.size() != clips.size()) throw ShapeError("patch grid: frame counts missing");
  for (std::size_t i = 0; i < clips.size(); ++i) {
    if (frames[i] < 1) throw ShapeError("patch grid: clip without frames");
    if (clips[i].rows() != static_cast<Eigen::Index>(frames[i]) * patches || clips[i].cols() != dim)
      throw ShapeError("patch grid: clip " + std::to_string(i) + " is not (T*N) x d_v");
    if (!clips[i].allFinite()) throw ShapeError("patch grid: non-finite features");
  }
}

RandomProjectionPatchEmbedder::RandomProjectionPatchEmbedder(int feature_dim, int patches, int dim,
                                                             std::uint64_t seed)
    : feature_dim_(feature_dim), patches_(patches), dim_(dim) {
  if (feature_dim <= 0 || patches <= 0 || dim <= 0)
    throw ValidationError("patch embedder dims must be positive");
  std::mt19937_64 rng(seed);
  projection_ = nn::normal_matrix(feature_dim, static_cast<Eigen::Index>(patches) * dim,
                                  1.0 / std::sqrt(static_cast<double>(feature_dim)), rng);
}

nn::Matrix RandomProjectionPatchEmbedder::patches(const nn::Matrix& frame_features) const {
  if (frame_features.cols() != feature_dim_)
    throw ShapeError("patch embedder: feature dim " + std::to_string(frame_features.cols()) +
                     " != " + std::to_string(feature_dim_));
  const nn::Matrix proj = (frame_features * projection_).array().tanh().matrix();  // T x (N*d)
  nn::Matrix out(frame_features.rows() * patches_, dim_);
  for (Eigen::Index t = 0; t < frame_features.rows(); ++t)
    for (int n = 0; n < patches_; ++n) out.row(t * patches_ + n) = proj.block(t, n * dim_, 1, dim_);
  return out;
}

PatchFeatureGrid make_grid(const PatchFeatureProvider& provider,
                           const std::vector<nn::Matrix>& clip_frames) {
  PatchFeatureGrid grid;
  grid.patches = provider.patch_count();
  grid.dim = provider.dim();
  for (const auto& f : clip_frames) {
    grid.clips.push_back(provider.patches(f));
    grid.frames.push_back(static_cast<int>(f.rows()));
  }
  return grid;
}

}  // namespace egoexo::captioning
