#include "egoexo/retrieval/trainer.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "egoexo/errors.hpp"

namespace egoexo::retrieval {

void RetrievalTrainingConfig::validate() const {
  if (epochs < 0) throw ValidationError("epochs must be >= 0");
  if (!(lr > 0.0)) throw ValidationError("lr must be positive");
  if (batch_size == 0) throw ValidationError("batch_size must be positive");
  if (frames <= 0) throw ValidationError("frames must be positive");
}

TrainingResult train_retrieval(CrossViewEncoder& encoder, TextEncoderAdapter& text,
                               std::span<const TrainingSample> dataset,
                               const RetrievalTrainingConfig& cfg, const LossConfig& loss) {
  cfg.validate();
  loss.validate();
  if (dataset.empty()) throw ValidationError("train_retrieval: empty dataset");

  std::vector<nn::Var> trainable;
  for (const auto& [name, v] : encoder.params().items()) trainable.push_back(v);
  if (text.trainable())
    for (const auto& [name, v] : text.params().items()) trainable.push_back(v);
  nn::AdamW opt(trainable, {cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay, cfg.clip_norm});

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);

  TrainingResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      if (cfg.max_steps && result.steps >= cfg.max_steps) return result;
      const auto end = std::min(order.size(), begin + cfg.batch_size);
      std::vector<nn::Matrix> ego_clips, exo_clips;
      std::vector<std::string> ego_texts, exo_texts;
      std::vector<SampleEntities> entities;
      for (std::size_t k = begin; k < end; ++k) {
        const auto& s = dataset[order[k]];
        auto ego_idx = sample_frames(static_cast<int>(s.ego.frame_count()), cfg.frames, rng);
        auto exo_idx = sample_frames(static_cast<int>(s.exo.frame_count()), cfg.frames, rng);
        ego_clips.push_back(select_frames(s.ego.frames, ego_idx));
        exo_clips.push_back(select_frames(s.exo.frames, exo_idx));
        ego_texts.push_back(s.ego_text);
        exo_texts.push_back(s.exo_text);
        entities.push_back(s.entities);
      }
      auto z_ego = encoder.forward(ego_clips);
      auto z_exo = encoder.forward(exo_clips);
      auto u_ego = text.forward(ego_texts);
      auto u_exo = text.forward(exo_texts);
      auto mask = build_positive_mask(entities, loss);
      auto l = egoexo_nce_loss(z_ego, z_exo, u_ego, u_exo, mask, loss);
      nn::backward(l);
      opt.step();
      if (!text.trainable()) text.params().zero_grad();
      result.loss_trace.push_back(l.scalar());
      ++result.steps;
    }
  }
  return result;
}

}  // namespace egoexo::retrieval
