#include "egoexo/captioning/captioner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <random>

#include "egoexo/errors.hpp"
#include "egoexo/retrieval/encoder.hpp"

namespace egoexo::captioning {

namespace {

CaptionerConfig resolve(CaptionerConfig cfg, const Vocabulary& vocab) {
  if (cfg.feature_dim <= 0 || cfg.patch_tokens <= 0 || cfg.visual_dim <= 0 || cfg.frames <= 0)
    throw ValidationError("captioner dims and frame count must be positive");
  cfg.resampler.dim = cfg.visual_dim;
  cfg.resampler.max_frames = std::max(cfg.resampler.max_frames, cfg.frames);
  cfg.decoder.visual_dim = cfg.visual_dim;
  cfg.decoder.vocab_size = vocab.size();
  return cfg;
}

void push_generated(PromptSequence& p, int id) {
  p.tokens.push_back(id);
  p.chunk_map.push_back(p.chunk_map.empty() ? 0 : p.chunk_map.back());
  p.loss_mask.push_back(false);
}

// Log-softmax of the last row of the logits, specials other than <eos> masked.
Eigen::RowVectorXd next_log_probs(const nn::Var& logits) {
  Eigen::RowVectorXd row = logits.value().row(logits.rows() - 1);
  for (int id = 0; id < Vocabulary::kReserved; ++id)
    if (id != Vocabulary::kEos) row(id) = -std::numeric_limits<double>::infinity();
  const double m = row.maxCoeff();
  const double lse = m + std::log((row.array() - m).exp().sum());
  return row.array() - lse;
}

}  // namespace

nlohmann::json CaptionerConfig::to_json() const {
  return {{"feature_dim", feature_dim},
          {"patch_tokens", patch_tokens},
          {"visual_dim", visual_dim},
          {"frames", frames},
          {"seed", seed},
          {"train_decoder", train_decoder},
          {"resampler",
           {{"query_count", resampler.query_count},
            {"depth", resampler.depth},
            {"dim", resampler.dim},
            {"heads", resampler.heads},
            {"max_frames", resampler.max_frames}}},
          {"decoder",
           {{"vocab_size", decoder.vocab_size},
            {"dim", decoder.dim},
            {"layers", decoder.layers},
            {"heads", decoder.heads},
            {"max_len", decoder.max_len},
            {"gated_interval", decoder.gated_interval},
            {"visual_dim", decoder.visual_dim}}}};
}

CaptionerConfig CaptionerConfig::from_json(const nlohmann::json& j) {
  CaptionerConfig c;
  c.feature_dim = j.value("feature_dim", c.feature_dim);
  c.patch_tokens = j.value("patch_tokens", c.patch_tokens);
  c.visual_dim = j.value("visual_dim", c.visual_dim);
  c.frames = j.value("frames", c.frames);
  c.seed = j.value("seed", c.seed);
  c.train_decoder = j.value("train_decoder", c.train_decoder);
  if (j.contains("resampler")) {
    const auto& r = j.at("resampler");
    c.resampler.query_count = r.value("query_count", c.resampler.query_count);
    c.resampler.depth = r.value("depth", c.resampler.depth);
    c.resampler.dim = r.value("dim", c.resampler.dim);
    c.resampler.heads = r.value("heads", c.resampler.heads);
    c.resampler.max_frames = r.value("max_frames", c.resampler.max_frames);
  }
  if (j.contains("decoder")) {
    const auto& d = j.at("decoder");
    c.decoder.vocab_size = d.value("vocab_size", c.decoder.vocab_size);
    c.decoder.dim = d.value("dim", c.decoder.dim);
    c.decoder.layers = d.value("layers", c.decoder.layers);
    c.decoder.heads = d.value("heads", c.decoder.heads);
    c.decoder.max_len = d.value("max_len", c.decoder.max_len);
    c.decoder.gated_interval = d.value("gated_interval", c.decoder.gated_interval);
    c.decoder.visual_dim = d.value("visual_dim", c.decoder.visual_dim);
  }
  return c;
}

void GenerationConfig::validate() const {
  if (shots < 0) throw ValidationError("shots must be >= 0");
  if (max_new_tokens < 1) throw ValidationError("max_new_tokens must be >= 1");
  if (decoding == Decoding::beam && beam_width < 1) throw ValidationError("beam_width must be >= 1");
}

Captioner::Captioner(CaptionerConfig cfg, Vocabulary vocab)
    : cfg_(resolve(cfg, vocab)),
      vocab_(std::move(vocab)),
      provider_(std::make_shared<RandomProjectionPatchEmbedder>(cfg_.feature_dim, cfg_.patch_tokens,
                                                                cfg_.visual_dim, cfg_.seed)),
      resampler_(cfg_.resampler, cfg_.seed + 1),
      decoder_(cfg_.decoder, cfg_.seed + 2) {}

nn::ParameterSet Captioner::all_params() const {
  nn::ParameterSet ps;
  ps.extend(resampler_.params());
  ps.extend(decoder_.gated_params());
  ps.extend(decoder_.base_params());
  return ps;
}

nn::Matrix Captioner::clip_frames(const nn::Matrix& frames) const {
  if (frames.rows() < 1) throw ShapeError("captioner: clip without frames");
  if (frames.cols() != cfg_.feature_dim)
    throw ShapeError("captioner: feature dim " + std::to_string(frames.cols()) + " != " +
                     std::to_string(cfg_.feature_dim));
  const auto idx = retrieval::even_frames(static_cast<int>(frames.rows()), cfg_.frames);
  nn::Matrix out(static_cast<Eigen::Index>(idx.size()), frames.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = frames.row(idx[i]);
  return out;
}

PromptSequence Captioner::prompt_for(const CaptionSample& sample, bool with_target) const {
  std::vector<std::string> captions;
  for (const auto& r : sample.retrieved) captions.push_back(r.second);
  auto prompt = build_prompt(captions, vocab_);
  if (with_target) append_target(prompt, vocab_.encode(sample.target));
  return prompt;
}

PatchFeatureGrid Captioner::grid_for(const CaptionSample& sample) const {
  std::vector<nn::Matrix> clips;
  for (const auto& r : sample.retrieved) clips.push_back(clip_frames(r.first));
  clips.push_back(clip_frames(sample.ego));
  return make_grid(*provider_, clips);
}

nn::Var Captioner::logits(const PromptSequence& prompt, const PatchFeatureGrid& grid) const {
  auto visual = resampler_.forward(grid);
  return decoder_.forward(prompt, visual, cfg_.resampler.query_count);
}

nn::Var Captioner::loss(std::span<const CaptionSample* const> batch) const {
  if (batch.empty()) throw ValidationError("captioner loss: empty batch");
  std::vector<PromptSequence> prompts;
  prompts.reserve(batch.size());
  PatchFeatureGrid grid;
  grid.patches = provider_->patch_count();
  grid.dim = provider_->dim();
  DecoderBatch db;
  db.tokens_per_clip = cfg_.resampler.query_count;
  std::vector<int> targets;
  std::vector<bool> mask;
  for (const auto* s : batch) {
    prompts.push_back(prompt_for(*s, true));
    const auto& p = prompts.back();
    db.visual_clip_offset.push_back(static_cast<int>(grid.clips.size()));
    auto g = grid_for(*s);
    for (std::size_t c = 0; c < g.clips.size(); ++c) {
      grid.clips.push_back(std::move(g.clips[c]));
      grid.frames.push_back(g.frames[c]);
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      const bool last = i + 1 == p.size();
      targets.push_back(last ? Vocabulary::kPad : p.tokens[i + 1]);
      mask.push_back(!last && p.loss_mask[i + 1]);
    }
  }
  for (const auto& p : prompts) db.sequences.push_back(&p);
  auto visual = resampler_.forward(grid);
  auto out = decoder_.forward(db, visual);
  auto flags = std::make_unique<bool[]>(mask.size());
  std::copy(mask.begin(), mask.end(), flags.get());
  return nn::masked_cross_entropy(out, targets, std::span<const bool>(flags.get(), mask.size()));
}

CaptionTrainingResult Captioner::train(std::span<const CaptionSample> dataset,
                                       const CaptionTrainingConfig& cfg) {
  if (dataset.empty()) throw ValidationError("train_captioner: empty dataset");
  if (cfg.epochs < 0) throw ValidationError("epochs must be >= 0");
  if (!(cfg.lr > 0.0)) throw ValidationError("lr must be positive");
  if (cfg.batch_size == 0) throw ValidationError("batch_size must be positive");

  std::vector<nn::Var> trainable;
  for (const auto& [name, v] : resampler_.params().items()) trainable.push_back(v);
  for (const auto& [name, v] : decoder_.gated_params().items()) trainable.push_back(v);
  if (cfg_.train_decoder)
    for (const auto& [name, v] : decoder_.base_params().items()) trainable.push_back(v);
  nn::AdamW opt(trainable, {cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay, cfg.clip_norm});

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  CaptionTrainingResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      if (cfg.max_steps && result.steps >= cfg.max_steps) return result;
      std::vector<const CaptionSample*> batch;
      for (std::size_t k = begin; k < std::min(order.size(), begin + cfg.batch_size); ++k)
        batch.push_back(&dataset[order[k]]);
      auto l = loss(batch);
      nn::backward(l);
      opt.step();
      if (!cfg_.train_decoder) decoder_.base_params().zero_grad();
      result.loss_trace.push_back(l.scalar());
      ++result.steps;
    }
  }
  return result;
}

std::vector<int> Captioner::generate_ids(
    const nn::Matrix& ego, const std::vector<std::pair<nn::Matrix, std::string>>& retrieved,
    const GenerationConfig& cfg) const {
  cfg.validate();
  if (static_cast<int>(retrieved.size()) != cfg.shots)
    throw ValidationError("generate: " + std::to_string(retrieved.size()) +
                          " retrieved clips for shots=" + std::to_string(cfg.shots));
  CaptionSample sample{ego, retrieved, ""};
  const auto base = prompt_for(sample, false);
  const auto visual = resampler_.forward(grid_for(sample));
  const int L = cfg_.resampler.query_count;
  const auto budget = std::min<std::size_t>(
      static_cast<std::size_t>(cfg.max_new_tokens),
      static_cast<std::size_t>(cfg_.decoder.max_len) - std::min(base.size(), std::size_t(cfg_.decoder.max_len)));

  if (cfg.decoding == Decoding::greedy) {
    auto p = base;
    std::vector<int> out;
    for (std::size_t step = 0; step < budget; ++step) {
      auto lp = next_log_probs(decoder_.forward(p, visual, L));
      Eigen::Index best = 0;
      lp.maxCoeff(&best);
      if (best == Vocabulary::kEos) break;
      out.push_back(static_cast<int>(best));
      push_generated(p, static_cast<int>(best));
    }
    return out;
  }

  struct Beam {
    PromptSequence seq;
    std::vector<int> ids;
    double score = 0.0;
    bool done = false;
  };
  std::vector<Beam> beams{{base, {}, 0.0, false}};
  for (std::size_t step = 0; step < budget; ++step) {
    std::vector<Beam> next;
    for (const auto& b : beams) {
      if (b.done) {
        next.push_back(b);
        continue;
      }
      auto lp = next_log_probs(decoder_.forward(b.seq, visual, L));
      std::vector<int> ids(static_cast<std::size_t>(lp.size()));
      std::iota(ids.begin(), ids.end(), 0);
      const auto w = std::min<std::size_t>(static_cast<std::size_t>(cfg.beam_width), ids.size());
      std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(w), ids.end(),
                        [&](int a, int c) { return lp(a) > lp(c) || (lp(a) == lp(c) && a < c); });
      for (std::size_t i = 0; i < w; ++i) {
        if (!std::isfinite(lp(ids[i]))) continue;
        Beam nb = b;
        nb.score += lp(ids[i]);
        if (ids[i] == Vocabulary::kEos) {
          nb.done = true;
        } else {
          nb.ids.push_back(ids[i]);
          push_generated(nb.seq, ids[i]);
        }
        next.push_back(std::move(nb));
      }
    }
    std::stable_sort(next.begin(), next.end(), [](const Beam& a, const Beam& b) { return a.score > b.score; });
    if (next.size() > static_cast<std::size_t>(cfg.beam_width)) next.resize(static_cast<std::size_t>(cfg.beam_width));
    beams = std::move(next);
    if (std::all_of(beams.begin(), beams.end(), [](const Beam& b) { return b.done; })) break;
  }
  return beams.front().ids;
}

std::string Captioner::generate(const nn::Matrix& ego,
                                const std::vector<std::pair<nn::Matrix, std::string>>& retrieved,
                                const GenerationConfig& cfg) const {
  return vocab_.decode_words(generate_ids(ego, retrieved, cfg));
}

nn::Checkpoint Captioner::checkpoint() const {
  nlohmann::json j = {{"captioner", cfg_.to_json()}, {"vocabulary", vocab_.to_json()}};
  return nn::Checkpoint::from(all_params(), j.dump());
}

Captioner Captioner::from_checkpoint(const nn::Checkpoint& ck) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ck.config_json);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("captioner checkpoint config: ") + e.what());
  }
  if (!j.contains("captioner") || !j.contains("vocabulary"))
    throw FormatError("checkpoint does not hold a captioner");
  Captioner model(CaptionerConfig::from_json(j.at("captioner")), Vocabulary::from_json(j.at("vocabulary")));
  auto ps = model.all_params();
  ck.restore(ps);
  return model;
}

CaptionTrainingResult train_captioner(Captioner& model, std::span<const CaptionSample> dataset,
                                      const CaptionTrainingConfig& cfg) {
  return model.train(dataset, cfg);
}

std::string generate_caption(const Captioner& model, const nn::Matrix& ego,
                             const std::vector<std::pair<nn::Matrix, std::string>>& retrieved,
                             const GenerationConfig& cfg) {
  return model.generate(ego, retrieved, cfg);
}

}  // namespace egoexo::captioning
