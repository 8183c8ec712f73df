#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "egoexo/data/types.hpp"
#include "egoexo/nn/optimizer.hpp"
#include "egoexo/retrieval/encoder.hpp"
#include "egoexo/retrieval/loss.hpp"

namespace egoexo::retrieval {

struct TrainingSample {
  data::FeatureMatrix ego;
  data::FeatureMatrix exo;
  std::string ego_text;
  std::string exo_text;
  SampleEntities entities;
};

struct RetrievalTrainingConfig {
  int epochs = 5;
  double lr = 3e-5;
  std::size_t batch_size = 4096;
  int frames = 4;
  std::uint64_t seed = 0;
  double weight_decay = 0.01;
  double clip_norm = 0.0;
  std::size_t max_steps = 0;  // 0 means no cap beyond epochs

  void validate() const;
};

struct TrainingResult {
  std::vector<double> loss_trace;  // one entry per optimizer step
  std::size_t steps = 0;
};

/// Updates the cross-view encoder and, when trainable, the text adapter.
/// Per-view frame features are inputs only. Deterministic given the seed.
/// Throws ValidationError on an empty dataset.
TrainingResult train_retrieval(CrossViewEncoder& encoder, TextEncoderAdapter& text,
                               std::span<const TrainingSample> dataset,
                               const RetrievalTrainingConfig& cfg, const LossConfig& loss);

}  // namespace egoexo::retrieval
