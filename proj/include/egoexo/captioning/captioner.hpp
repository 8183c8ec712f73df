#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "egoexo/captioning/decoder.hpp"
#include "egoexo/captioning/resampler.hpp"
#include "egoexo/captioning/visual.hpp"
#include "egoexo/captioning/vocabulary.hpp"
#include "egoexo/nn/checkpoint.hpp"
#include "egoexo/nn/optimizer.hpp"

namespace egoexo::captioning {

struct CaptionerConfig {
  int feature_dim = 768;  // stored frame feature width
  int patch_tokens = 16;  // N
  int visual_dim = 64;    // d_v
  int frames = 4;         // frames per clip fed to the visual provider
  ResamplerConfig resampler{};
  DecoderConfig decoder{};
  std::uint64_t seed = 0;
  bool train_decoder = true;

  nlohmann::json to_json() const;
  static CaptionerConfig from_json(const nlohmann::json& j);
};

struct CaptionSample {
  nn::Matrix ego;  // T x feature_dim
  std::vector<std::pair<nn::Matrix, std::string>> retrieved;
  std::string target;
};

struct CaptionTrainingConfig {
  int epochs = 3;
  double lr = 1e-5;
  std::size_t batch_size = 8;
  std::size_t max_steps = 0;
  std::uint64_t seed = 0;
  double weight_decay = 0.0;
  double clip_norm = 1.0;
};

enum class Decoding { greedy, beam };

struct GenerationConfig {
  int shots = 1;
  int max_new_tokens = 20;
  Decoding decoding = Decoding::greedy;
  int beam_width = 3;

  void validate() const;
};

struct CaptionTrainingResult {
  std::vector<double> loss_trace;
  std::size_t steps = 0;
};

/// Retrieval-augmented captioner: frozen patch provider, perceiver
/// resampler, gated decoder and vocabulary.
class Captioner {
 public:
  Captioner(CaptionerConfig cfg, Vocabulary vocab);

  const CaptionerConfig& config() const { return cfg_; }
  const Vocabulary& vocabulary() const { return vocab_; }
  PerceiverResampler& resampler() { return resampler_; }
  CaptionDecoder& decoder() { return decoder_; }
  const PerceiverResampler& resampler() const { return resampler_; }
  const CaptionDecoder& decoder() const { return decoder_; }
  const PatchFeatureProvider& provider() const { return *provider_; }

  /// Resampler, gated blocks and base decoder parameters under stable names.
  nn::ParameterSet all_params() const;

  /// Prompt (+ target when given) and its clip frames, ego last.
  PromptSequence prompt_for(const CaptionSample& sample, bool with_target) const;
  PatchFeatureGrid grid_for(const CaptionSample& sample) const;

  /// Mean token cross-entropy over ego target tokens of a batch.
  nn::Var loss(std::span<const CaptionSample* const> batch) const;
  nn::Var logits(const PromptSequence& prompt, const PatchFeatureGrid& grid) const;

  CaptionTrainingResult train(std::span<const CaptionSample> dataset, const CaptionTrainingConfig& cfg);

  std::vector<int> generate_ids(const nn::Matrix& ego,
                                const std::vector<std::pair<nn::Matrix, std::string>>& retrieved,
                                const GenerationConfig& cfg) const;
  std::string generate(const nn::Matrix& ego,
                       const std::vector<std::pair<nn::Matrix, std::string>>& retrieved,
                       const GenerationConfig& cfg) const;

  nn::Checkpoint checkpoint() const;
  static Captioner from_checkpoint(const nn::Checkpoint& ck);

 private:
  nn::Matrix clip_frames(const nn::Matrix& frames) const;

  CaptionerConfig cfg_;
  Vocabulary vocab_;
  std::shared_ptr<const PatchFeatureProvider> provider_;
  PerceiverResampler resampler_;
  CaptionDecoder decoder_;
};

/// Convenience wrappers with the toolkit's operation names.
CaptionTrainingResult train_captioner(Captioner& model, std::span<const CaptionSample> dataset,
                                      const CaptionTrainingConfig& cfg);
std::string generate_caption(const Captioner& model, const nn::Matrix& ego,
                             const std::vector<std::pair<nn::Matrix, std::string>>& retrieved,
                             const GenerationConfig& cfg);

}  // namespace egoexo::captioning
