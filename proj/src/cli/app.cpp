#include "egoexo/cli/app.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>

#include "egoexo/captioning/captioner.hpp"
#include "egoexo/cli/run_config.hpp"
#include "egoexo/data/feature_store.hpp"
#include "egoexo/data/manifest.hpp"
#include "egoexo/errors.hpp"
#include "egoexo/io.hpp"
#include "egoexo/metrics/caption_metrics.hpp"
#include "egoexo/metrics/report.hpp"
#include "egoexo/metrics/retrieval_metrics.hpp"
#include "egoexo/mining/pair_mining.hpp"
#include "egoexo/nn/checkpoint.hpp"
#include "egoexo/retrieval/index.hpp"
#include "egoexo/retrieval/trainer.hpp"
#include "egoexo/text/normalize.hpp"
#include "egoexo/text/refiner.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace egoexo::cli {

namespace {

struct Context {
  RunConfig cfg;
  std::string command;
  std::ostream& out;
  json inputs = json::object();
  json outputs = json::object();
  json counts = json::object();
};

// ---------------------------------------------------------------------------
// Input helpers. Everything is loaded and checked before any output is written.

const std::string& need(const std::string& value, const char* field) {
  if (value.empty()) throw ValidationError(std::string("--") + field + " is required");
  return value;
}

const std::string& input(Context& ctx, const std::string& value, const char* field) {
  need(value, field);
  if (!fs::exists(value)) throw IoError(std::string(field) + ": no such file " + value);
  ctx.inputs[field] = value;
  return value;
}

const std::string& output(Context& ctx, const std::string& value, const char* field) {
  need(value, field);
  const auto parent = fs::path(value).parent_path();
  if (!parent.empty() && !fs::is_directory(parent))
    throw IoError(std::string(field) + ": directory does not exist: " + parent.string());
  ctx.outputs[field] = value;
  return value;
}

template <class F>
auto with_path(const std::string& path, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ParseError&) {
    throw;  // already names the file and line
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

data::DatasetManifest manifest(Context& ctx, const std::string& path, const char* field,
                               std::optional<data::ViewLabel> view) {
  input(ctx, path, field);
  return with_path(path, [&] { return data::load_manifest(path, view); });
}

data::FeatureStore features(Context& ctx, const std::string& path, const char* field) {
  input(ctx, path, field);
  return with_path(path, [&] { return data::read_feature_store(path); });
}

text::TaggerLexicon lexicon(Context& ctx) {
  const auto& path = input(ctx, ctx.cfg.lexicon, "lexicon");
  return text::TaggerLexicon::load(path);
}

void require_features(const data::DatasetManifest& m, const data::FeatureStore& store, const char* what) {
  std::vector<std::string> missing;
  for (const auto& r : m.records)
    if (!store.contains(r.clip_id)) missing.push_back(r.clip_id);
  if (missing.empty()) return;
  std::string list;
  for (std::size_t i = 0; i < missing.size() && i < 5; ++i) list += (i ? ", " : "") + missing[i];
  throw ValidationError(std::string(what) + ": " + std::to_string(missing.size()) +
                        " clips have no features (" + list + (missing.size() > 5 ? ", ..." : "") + ")");
}

std::map<std::string, const data::ClipRecord*> by_id(const data::DatasetManifest& m) {
  std::map<std::string, const data::ClipRecord*> out;
  for (const auto& r : m.records) out[r.clip_id] = &r;
  return out;
}

/// Ego clip id -> ranked exo ids, from a pairs or retrievals file.
std::vector<std::pair<std::string, std::vector<std::string>>> ranked_lists(const std::string& path) {
  const auto text = io::read_file_text(path);
  std::vector<std::pair<std::string, std::vector<std::string>>> out;
  std::size_t line_no = 0, begin = 0;
  while (begin <= text.size()) {
    auto end = text.find('\n', begin);
    if (end == std::string::npos) end = text.size();
    const auto line = text::trim(std::string_view(text).substr(begin, end - begin));
    ++line_no;
    begin = end + 1;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      out.emplace_back(j.at("ego_clip_id").get<std::string>(), j.at("exo_clip_ids").get<std::vector<std::string>>());
    } catch (const json::exception& e) {
      throw ParseError(path, line_no, e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model (de)serialization.

struct RetrievalModel {
  retrieval::CrossViewEncoder encoder;
  retrieval::TextEncoderAdapter text;
  retrieval::LossConfig loss;
  int frames = 4;
};

nn::Checkpoint retrieval_checkpoint(const RetrievalModel& m) {
  const auto& e = m.encoder.config();
  json cfg = {{"kind", "retrieval"},
              {"encoder", {{"layers", e.layers}, {"model_dim", e.model_dim}, {"heads", e.heads}, {"max_frames", e.max_frames}}},
              {"text", {{"backend", "hashed"}, {"dim", m.text.config().dim}, {"buckets", m.text.config().buckets}}},
              {"temperature", m.loss.temperature},
              {"entity_rule", std::string(retrieval::to_string(m.loss.entity_rule))},
              {"frames", m.frames}};
  nn::ParameterSet ps;
  ps.extend(m.encoder.params());
  ps.extend(m.text.params());
  return nn::Checkpoint::from(ps, cfg.dump());
}

RetrievalModel load_retrieval(Context& ctx) {
  const auto& path = input(ctx, ctx.cfg.retrieval_checkpoint, "retrieval_checkpoint");
  return with_path(path, [&] {
    const auto ck = nn::Checkpoint::load(path);
    json j;
    try {
      j = json::parse(ck.config_json);
    } catch (const json::exception& e) {
      throw FormatError(std::string("bad checkpoint config: ") + e.what());
    }
    if (j.value("kind", "") != "retrieval") throw FormatError("not a retrieval checkpoint");
    const auto& e = j.at("encoder");
    retrieval::CrossViewEncoderConfig ec{e.at("layers").get<int>(), e.at("model_dim").get<int>(),
                                         e.at("heads").get<int>(), e.at("max_frames").get<int>()};
    const auto& t = j.at("text");
    RetrievalModel m{retrieval::CrossViewEncoder(ec, 0),
                     retrieval::TextEncoderAdapter::hashed(t.at("dim").get<int>(), t.at("buckets").get<int>(), 0),
                     {j.at("temperature").get<double>(),
                      j.at("entity_rule").get<std::string>() == "either" ? retrieval::EntityRule::either
                                                                          : retrieval::EntityRule::both},
                     j.at("frames").get<int>()};
    nn::ParameterSet ps;
    ps.extend(m.encoder.params());
    ps.extend(m.text.params());
    ck.restore(ps);
    return m;
  });
}

Eigen::VectorXd embed_clip(const RetrievalModel& m, const data::FeatureMatrix& f) {
  const auto idx = retrieval::even_frames(static_cast<int>(f.frame_count()), m.frames);
  const nn::Matrix clip = retrieval::select_frames(f.frames, idx);
  auto z = m.encoder.forward(std::span<const nn::Matrix>(&clip, 1));
  return z.value().row(0).transpose();
}

nn::Matrix frames_of(const data::FeatureMatrix& f) { return retrieval::to_matrix(f.frames); }

captioning::Captioner load_captioner(Context& ctx) {
  const auto& path = input(ctx, ctx.cfg.captioner_checkpoint, "captioner_checkpoint");
  return with_path(path, [&] { return captioning::Captioner::from_checkpoint(nn::Checkpoint::load(path)); });
}

std::string caption_text(const data::ClipRecord& r) { return text::normalize_caption(r.best_text()); }

// ---------------------------------------------------------------------------
// Commands. Each returns after its outputs and summary are written.

std::vector<std::string> echo_keys(const std::string& command) {
  static const std::map<std::string, std::vector<std::string>> keys = {
      {"mine-pairs", {"alpha", "top_k", "threads"}},
      {"refine-captions", {"refiner", "max_in_flight", "longform_min", "longform_max", "narrations_per_window"}},
      {"train-retrieval", {"epochs", "lr", "batch_size", "temperature", "frames", "entity_rule", "encoder_layers",
                           "encoder_heads", "weight_decay", "max_steps", "seed"}},
      {"build-index", {"frames"}},
      {"retrieve", {"retrieve_k", "score_mode"}},
      {"train-captioner", {"shots", "query_count", "resampler_depth", "visual_dim", "decoder_dim", "decoder_layers",
                           "caption_epochs", "caption_lr", "caption_batch_size", "train_decoder", "seed"}},
      {"caption", {"shots", "decoding", "beam_width", "max_new_tokens"}},
      {"evaluate-retrieval", {"score_mode", "gain"}},
      {"evaluate-captioning", {}},
  };
  return keys.at(command);
}

void cmd_mine_pairs(Context& ctx) {
  const auto& c = ctx.cfg;
  auto ego = manifest(ctx, c.ego_manifest, "ego_manifest", data::ViewLabel::ego);
  auto exo = manifest(ctx, c.exo_manifest, "exo_manifest", data::ViewLabel::exo);
  auto lex = lexicon(ctx);
  const auto& pairs_path = output(ctx, c.pairs, "pairs");
  if (!c.extended_exo_manifest.empty()) output(ctx, c.extended_exo_manifest, "extended_exo_manifest");

  mining::MiningConfig mc;
  mc.alpha_s = c.alpha;
  mc.top_k = c.top_k;
  mc.threads = c.threads;
  mc.validate();
  const auto index = mining::build_entity_index(exo.records, lex);
  const auto result = mining::mine_pairs(ego.records, index, lex, mc);

  std::size_t with_pair = 0;
  for (const auto& p : result.pairs) with_pair += !p.candidates.empty();
  mining::save_pairs(result.pairs, pairs_path);
  if (!c.extended_exo_manifest.empty()) {
    std::map<std::string, std::pair<double, double>> bounds;
    for (const auto& r : exo.records) {
      auto [it, fresh] = bounds.try_emplace(r.video_id, r.start_s, r.end_s);
      if (!fresh) it->second = {std::min(it->second.first, r.start_s), std::max(it->second.second, r.end_s)};
    }
    auto extended = exo;
    for (auto& r : extended.records) {
      const auto [lo, hi] = bounds.at(r.video_id);
      std::tie(r.start_s, r.end_s) = mining::extend_boundaries(r, c.alpha, lo, hi);
    }
    data::save_manifest(extended, c.extended_exo_manifest);
  }
  ctx.counts = {{"ego_clips", ego.records.size()},
                {"exo_clips", exo.records.size()},
                {"ego_with_pairs", with_pair},
                {"skipped_no_scenario", result.skipped_no_scenario}};
}

void cmd_refine(Context& ctx) {
  const auto& c = ctx.cfg;
  auto m = manifest(ctx, c.exo_manifest, "exo_manifest", std::nullopt);
  auto lex = lexicon(ctx);
  text::RefinementPrompt prompt;
  if (!c.prompt.empty()) {
    input(ctx, c.prompt, "prompt");
    prompt = text::RefinementPrompt::load(c.prompt);
  } else if (c.refiner == "http") {
    throw ValidationError("--prompt is required with refiner=http");
  }
  const auto& out_path = output(ctx, c.refined_manifest, "refined_manifest");
  if (!c.longform_manifest.empty()) output(ctx, c.longform_manifest, "longform_manifest");
  mining::MiningConfig mc;
  mc.longform_min_s = c.longform_min;
  mc.longform_max_s = c.longform_max;
  mc.narrations_per_window = c.narrations_per_window;
  mc.validate();

  std::unique_ptr<text::Refiner> backend;
  if (c.refiner == "http") {
    text::HttpClientConfig hc;
    hc.base_url = c.refiner_url;
    hc.path = c.refiner_path;
    hc.timeout = std::chrono::milliseconds(c.refiner_timeout_ms);
    hc.retries = c.refiner_retries;
    if (hc.base_url.empty()) throw ValidationError("refiner=http needs --refiner_url or EGOEXO_REFINER_URL");
    backend = std::make_unique<text::LlmRefiner>(std::make_shared<text::HttpTextGenerationClient>(hc), c.max_tokens);
  } else {
    backend = std::make_unique<text::RuleBasedRefiner>(lex);
  }

  // Same grouping as group_transcripts: videos in first-seen order,
  // narrations stable-sorted by start.
  const auto docs = data::group_transcripts(m.records, false);
  std::map<std::string, std::vector<std::size_t>> rows;
  for (std::size_t i = 0; i < m.records.size(); ++i) rows[m.records[i].video_id].push_back(i);
  for (auto& [vid, idx] : rows)
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return m.records[a].start_s < m.records[b].start_s; });

  const auto refined = text::refine_documents(docs, prompt, *backend, c.max_in_flight);
  std::size_t changed = 0;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    const auto& idx = rows.at(docs[d].video_id);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      m.records[idx[k]].refined_text = refined[d][k];
      changed += refined[d][k] != m.records[idx[k]].raw_text;
    }
  }

  data::DatasetManifest longform{m.view, std::nullopt, {}};
  if (!c.longform_manifest.empty()) {
    for (const auto& doc : data::group_transcripts(m.records, true)) {
      const auto& scenario = m.records[rows.at(doc.video_id).front()].scenario;
      auto clips = mining::build_longform_clips(doc, mc, *backend, m.view, scenario);
      longform.records.insert(longform.records.end(), clips.begin(), clips.end());
    }
  }
  data::save_manifest(m, out_path);
  if (!c.longform_manifest.empty()) data::save_manifest(longform, c.longform_manifest);
  ctx.counts = {{"clips", m.records.size()},
                {"documents", docs.size()},
                {"rewritten", changed},
                {"longform_clips", longform.records.size()}};
}

void cmd_train_retrieval(Context& ctx) {
  const auto& c = ctx.cfg;
  auto ego = manifest(ctx, c.ego_manifest, "ego_manifest", data::ViewLabel::ego);
  auto exo = manifest(ctx, c.exo_manifest, "exo_manifest", data::ViewLabel::exo);
  auto ego_store = features(ctx, c.ego_features, "ego_features");
  auto exo_store = features(ctx, c.exo_features, "exo_features");
  auto lex = lexicon(ctx);
  input(ctx, c.pairs, "pairs");
  const auto pairs = with_path(c.pairs, [&] { return mining::load_pairs(c.pairs); });
  const auto& out_path = output(ctx, c.retrieval_checkpoint, "retrieval_checkpoint");
  if (ego_store.dim() != exo_store.dim())
    throw ValidationError("ego and exo feature dims differ: " + std::to_string(ego_store.dim()) + " vs " +
                          std::to_string(exo_store.dim()));

  const auto ego_ids = by_id(ego);
  const auto exo_ids = by_id(exo);
  std::vector<retrieval::TrainingSample> samples;
  for (const auto& p : pairs) {
    if (p.candidates.empty()) continue;
    const auto& exo_id = p.candidates.front().exo_clip_id;
    auto e = ego_ids.find(p.ego_clip_id);
    auto x = exo_ids.find(exo_id);
    if (e == ego_ids.end()) throw ValidationError("pairs: ego clip " + p.ego_clip_id + " not in ego manifest");
    if (x == exo_ids.end()) throw ValidationError("pairs: exo clip " + exo_id + " not in exo manifest");
    retrieval::TrainingSample s;
    s.ego = ego_store.at(p.ego_clip_id);
    s.exo = exo_store.at(exo_id);
    s.ego_text = caption_text(*e->second);
    s.exo_text = caption_text(*x->second);
    s.entities = {text::extract_entities(s.ego_text, lex), text::extract_entities(s.exo_text, lex)};
    samples.push_back(std::move(s));
  }
  if (samples.empty()) throw ValidationError("pairs file has no ego clip with a paired exo clip");

  const int dim = static_cast<int>(ego_store.dim());
  retrieval::LossConfig loss{c.temperature, retrieval::parse_entity_rule(c.entity_rule)};
  RetrievalModel m{retrieval::CrossViewEncoder({c.encoder_layers, dim, c.encoder_heads, c.max_frames}, c.seed),
                   retrieval::TextEncoderAdapter::hashed(dim, c.text_buckets, c.seed + 1), loss, c.frames};
  retrieval::RetrievalTrainingConfig tc;
  tc.epochs = c.epochs;
  tc.lr = c.lr;
  tc.batch_size = c.batch_size;
  tc.frames = c.frames;
  tc.seed = c.seed;
  tc.weight_decay = c.weight_decay;
  tc.max_steps = c.max_steps;
  const auto result = retrieval::train_retrieval(m.encoder, m.text, samples, tc, loss);
  retrieval_checkpoint(m).save(out_path);
  ctx.counts = {{"samples", samples.size()},
                {"steps", result.steps},
                {"first_loss", result.loss_trace.empty() ? 0.0 : result.loss_trace.front()},
                {"final_loss", result.loss_trace.empty() ? 0.0 : result.loss_trace.back()}};
}

void cmd_build_index(Context& ctx) {
  const auto& c = ctx.cfg;
  auto exo = manifest(ctx, c.exo_manifest, "exo_manifest", data::ViewLabel::exo);
  auto store = features(ctx, c.exo_features, "exo_features");
  auto model = load_retrieval(ctx);
  const auto& out_path = output(ctx, c.index, "index");
  require_features(exo, store, "exo_features");
  if (exo.records.empty()) throw ValidationError("exo manifest is empty");

  retrieval::RetrievalIndex idx;
  idx.temperature = model.loss.temperature;
  const auto n = static_cast<Eigen::Index>(exo.records.size());
  const auto d = static_cast<Eigen::Index>(model.encoder.config().model_dim);
  idx.video.resize(n, d);
  idx.text.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = exo.records[static_cast<std::size_t>(i)];
    idx.clip_ids.push_back(r.clip_id);
    idx.video.row(i) = embed_clip(model, store.at(r.clip_id)).transpose();
    idx.text.row(i) = model.text.encode(caption_text(r)).transpose();
  }
  retrieval::save_index(idx, out_path);
  ctx.counts = {{"candidates", idx.size()}, {"dim", d}};
}

struct QueryScores {
  std::vector<std::string> ids;
  Eigen::MatrixXd scores;  // queries x candidates
};

QueryScores score_queries(const RetrievalModel& model, const data::DatasetManifest& ego, const data::FeatureStore& store,
                          const retrieval::RetrievalIndex& idx, retrieval::ScoreMode mode) {
  QueryScores q;
  q.scores.resize(static_cast<Eigen::Index>(ego.records.size()), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < ego.records.size(); ++i) {
    const auto& r = ego.records[i];
    q.ids.push_back(r.clip_id);
    const auto z = embed_clip(model, store.at(r.clip_id));
    if (z.size() != idx.video.cols()) throw ShapeError("query dim does not match the index dim");
    for (std::size_t j = 0; j < idx.size(); ++j)
      q.scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = retrieval::averaged_similarity(z, idx, j, mode);
  }
  return q;
}

void cmd_retrieve(Context& ctx) {
  const auto& c = ctx.cfg;
  auto ego = manifest(ctx, c.ego_manifest, "ego_manifest", data::ViewLabel::ego);
  auto store = features(ctx, c.ego_features, "ego_features");
  input(ctx, c.index, "index");
  const auto idx = with_path(c.index, [&] { return retrieval::load_index(c.index); });
  auto model = load_retrieval(ctx);
  const auto& out_path = output(ctx, c.retrievals, "retrievals");
  require_features(ego, store, "ego_features");
  const auto mode = retrieval::parse_score_mode(c.score_mode);

  std::string out;
  for (const auto& r : ego.records) {
    const auto top = retrieval::retrieve_topk(embed_clip(model, store.at(r.clip_id)), idx, c.retrieve_k, mode);
    json j = {{"ego_clip_id", r.clip_id}, {"exo_clip_ids", json::array()}, {"scores", json::array()}};
    for (const auto& [id, s] : top) {
      j["exo_clip_ids"].push_back(id);
      j["scores"].push_back(s);
    }
    out += j.dump() + "\n";
  }
  io::write_file_text(out_path, out);
  ctx.counts = {{"queries", ego.records.size()}, {"candidates", idx.size()}};
}

struct CaptionInputs {
  data::DatasetManifest ego, exo;
  data::FeatureStore ego_store, exo_store;
  std::map<std::string, std::vector<std::string>> retrieved;
};

CaptionInputs caption_inputs(Context& ctx, bool need_retrievals) {
  const auto& c = ctx.cfg;
  CaptionInputs in{manifest(ctx, c.ego_manifest, "ego_manifest", data::ViewLabel::ego),
                   manifest(ctx, c.exo_manifest, "exo_manifest", data::ViewLabel::exo),
                   features(ctx, c.ego_features, "ego_features"),
                   features(ctx, c.exo_features, "exo_features"),
                   {}};
  require_features(in.ego, in.ego_store, "ego_features");
  require_features(in.exo, in.exo_store, "exo_features");
  if (need_retrievals) {
    // Retrieval results, or mined pairs as ground-truth pairing.
    const char* field = c.retrievals.empty() ? "pairs" : "retrievals";
    const auto& path = input(ctx, c.retrievals.empty() ? c.pairs : c.retrievals, field);
    const auto exo_ids = by_id(in.exo);
    for (auto& [ego_id, exo_list] : ranked_lists(path)) {
      for (const auto& id : exo_list)
        if (!exo_ids.count(id)) throw ValidationError(path + ": exo clip " + id + " not in exo manifest");
      in.retrieved[ego_id] = std::move(exo_list);
    }
  }
  return in;
}

std::vector<std::pair<nn::Matrix, std::string>> shots_for(const CaptionInputs& in, const std::string& ego_id, int shots,
                                                          const std::map<std::string, const data::ClipRecord*>& exo_ids) {
  std::vector<std::pair<nn::Matrix, std::string>> out;
  if (shots == 0) return out;
  auto it = in.retrieved.find(ego_id);
  if (it == in.retrieved.end() || static_cast<int>(it->second.size()) < shots)
    throw ValidationError("clip " + ego_id + " has fewer than " + std::to_string(shots) + " retrieved exo clips");
  for (int k = 0; k < shots; ++k) {
    const auto& id = it->second[static_cast<std::size_t>(k)];
    out.emplace_back(frames_of(in.exo_store.at(id)), caption_text(*exo_ids.at(id)));
  }
  return out;
}

void cmd_train_captioner(Context& ctx) {
  const auto& c = ctx.cfg;
  auto in = caption_inputs(ctx, c.shots > 0);
  const auto& out_path = output(ctx, c.captioner_checkpoint, "captioner_checkpoint");
  if (in.ego_store.dim() != in.exo_store.dim()) throw ValidationError("ego and exo feature dims differ");

  const auto exo_ids = by_id(in.exo);
  std::vector<captioning::CaptionSample> samples;
  std::vector<std::string> texts;
  for (const auto& r : in.ego.records) {
    if (c.shots > 0 && !in.retrieved.count(r.clip_id)) continue;
    samples.push_back({frames_of(in.ego_store.at(r.clip_id)), shots_for(in, r.clip_id, c.shots, exo_ids), caption_text(r)});
    texts.push_back(samples.back().target);
  }
  if (samples.empty()) throw ValidationError("no ego clips with retrieved exo clips to train on");
  for (const auto& r : in.exo.records) texts.push_back(caption_text(r));

  captioning::CaptionerConfig cc;
  cc.feature_dim = static_cast<int>(in.ego_store.dim());
  cc.patch_tokens = c.patch_tokens;
  cc.visual_dim = c.visual_dim;
  cc.frames = c.frames;
  cc.resampler = {c.query_count, c.resampler_depth, c.visual_dim, c.resampler_heads, c.max_frames};
  cc.decoder.dim = c.decoder_dim;
  cc.decoder.layers = c.decoder_layers;
  cc.decoder.heads = c.decoder_heads;
  cc.decoder.max_len = c.decoder_max_len;
  cc.decoder.gated_interval = c.gated_interval;
  cc.seed = c.seed;
  cc.train_decoder = c.train_decoder;
  captioning::Captioner model(cc, captioning::Vocabulary::build(texts, c.vocab_size));

  captioning::CaptionTrainingConfig tc;
  tc.epochs = c.caption_epochs;
  tc.lr = c.caption_lr;
  tc.batch_size = c.caption_batch_size;
  tc.max_steps = c.caption_max_steps;
  tc.seed = c.seed;
  tc.weight_decay = c.caption_weight_decay;
  const auto result = model.train(samples, tc);
  model.checkpoint().save(out_path);
  ctx.counts = {{"samples", samples.size()},
                {"vocabulary", model.vocabulary().size()},
                {"steps", result.steps},
                {"first_loss", result.loss_trace.empty() ? 0.0 : result.loss_trace.front()},
                {"final_loss", result.loss_trace.empty() ? 0.0 : result.loss_trace.back()}};
}

void cmd_caption(Context& ctx) {
  const auto& c = ctx.cfg;
  auto in = caption_inputs(ctx, c.shots > 0);
  auto model = load_captioner(ctx);
  const auto& out_path = output(ctx, c.captions, "captions");
  captioning::GenerationConfig g;
  g.shots = c.shots;
  g.max_new_tokens = c.max_new_tokens;
  g.decoding = c.decoding == "beam" ? captioning::Decoding::beam : captioning::Decoding::greedy;
  g.beam_width = c.beam_width;
  g.validate();

  const auto exo_ids = by_id(in.exo);
  std::vector<std::vector<std::pair<nn::Matrix, std::string>>> shots;
  for (const auto& r : in.ego.records) shots.push_back(shots_for(in, r.clip_id, c.shots, exo_ids));
  std::string out;
  for (std::size_t i = 0; i < in.ego.records.size(); ++i) {
    const auto& r = in.ego.records[i];
    const auto caption = model.generate(frames_of(in.ego_store.at(r.clip_id)), shots[i], g);
    out += json({{"clip_id", r.clip_id}, {"caption", caption}}).dump() + "\n";
  }
  io::write_file_text(out_path, out);
  ctx.counts = {{"captions", in.ego.records.size()}};
}

std::vector<metrics::CandidateGroup> load_groups(const std::string& path) {
  std::vector<metrics::CandidateGroup> out;
  const auto text = io::read_file_text(path);
  std::size_t line_no = 0, begin = 0;
  while (begin <= text.size()) {
    auto end = text.find('\n', begin);
    if (end == std::string::npos) end = text.size();
    const auto line = text::trim(std::string_view(text).substr(begin, end - begin));
    ++line_no;
    begin = end + 1;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      out.push_back({j.at("query_id").get<std::string>(), j.at("candidates").get<std::vector<std::string>>(),
                     j.at("correct").get<int>(), j.value("label", std::string("all"))});
    } catch (const json::exception& e) {
      throw ParseError(path, line_no, e.what());
    }
  }
  return out;
}

void write_report(Context& ctx, const metrics::EvaluationReport& report, const std::string& path) {
  io::write_file_text(path, report.to_json().dump(2) + "\n");
  ctx.out << report.to_text();
  for (const auto& e : report.entries) ctx.counts[e.metric] = e.value;
}

void cmd_evaluate_retrieval(Context& ctx) {
  const auto& c = ctx.cfg;
  auto ego = manifest(ctx, c.ego_manifest, "ego_manifest", data::ViewLabel::ego);
  auto exo = manifest(ctx, c.exo_manifest, "exo_manifest", data::ViewLabel::exo);
  auto store = features(ctx, c.ego_features, "ego_features");
  auto lex = lexicon(ctx);
  input(ctx, c.index, "index");
  const auto idx = with_path(c.index, [&] { return retrieval::load_index(c.index); });
  auto model = load_retrieval(ctx);
  std::vector<metrics::CandidateGroup> groups;
  if (!c.mcq_groups.empty()) groups = load_groups(input(ctx, c.mcq_groups, "mcq_groups"));
  const auto& out_path = output(ctx, c.report, "report");
  require_features(ego, store, "ego_features");
  const auto mode = retrieval::parse_score_mode(c.score_mode);
  const auto gain = metrics::parse_gain(c.gain);
  const auto exo_ids = by_id(exo);
  for (const auto& id : idx.clip_ids)
    if (!exo_ids.count(id)) throw ValidationError("index clip " + id + " not in exo manifest");

  const auto q = score_queries(model, ego, store, idx, mode);
  // Graded relevance: shared noun and verb count between the captions.
  Eigen::MatrixXd rel(q.scores.rows(), q.scores.cols());
  std::vector<text::EntityProfile> exo_profiles;
  for (const auto& id : idx.clip_ids) exo_profiles.push_back(text::extract_entities(caption_text(*exo_ids.at(id)), lex));
  std::vector<std::vector<std::string>> rankings;
  std::vector<std::set<std::string>> relevant;
  for (std::size_t i = 0; i < ego.records.size(); ++i) {
    const auto p = text::extract_entities(caption_text(ego.records[i]), lex);
    std::set<std::string> rs;
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const auto s = static_cast<double>(mining::overlap_score(p, exo_profiles[j]));
      rel(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = s;
      if (s > 0) rs.insert(idx.clip_ids[j]);
    }
    relevant.push_back(std::move(rs));
    std::vector<std::string> ranked;
    for (auto j : metrics::rank_candidates(q.scores.row(static_cast<Eigen::Index>(i))))
      ranked.push_back(idx.clip_ids[static_cast<std::size_t>(j)]);
    rankings.push_back(std::move(ranked));
  }

  metrics::EvaluationReport report;
  report.task = "ego2exo retrieval";
  for (std::size_t k : {1, 5, 10}) {
    const auto r = metrics::recall_at_k(rankings, relevant, k);
    report.add("R@" + std::to_string(k), r.value, r.evaluated, r.excluded);
  }
  const auto ap = metrics::mean_average_precision(q.scores, rel);
  report.add("mAP", ap.value, ap.evaluated, ap.excluded);
  const auto nd = metrics::ndcg(q.scores, rel, gain);
  report.add("nDCG", nd.value, nd.evaluated, nd.excluded);
  if (!groups.empty()) {
    metrics::McqScores ms;
    for (std::size_t i = 0; i < q.ids.size(); ++i)
      for (std::size_t j = 0; j < idx.size(); ++j)
        ms[q.ids[i]][idx.clip_ids[j]] = q.scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    const auto mcq = metrics::mcq_accuracy(groups, ms);
    report.add("MCQ", mcq.overall.accuracy(), mcq.overall.total);
    for (const auto& [label, acc] : mcq.per_label) report.add("MCQ/" + label, acc.accuracy(), acc.total);
  }
  report.switches = {{"score_mode", c.score_mode},
                     {"ndcg_gain", metrics::to_string(gain)},
                     {"relevance", "shared noun + verb count"},
                     {"tie_break", "candidate order"},
                     {"mcq_ties", "incorrect"}};
  write_report(ctx, report, out_path);
}

void cmd_evaluate_captioning(Context& ctx) {
  const auto& c = ctx.cfg;
  auto ego = manifest(ctx, c.ego_manifest, "ego_manifest", data::ViewLabel::ego);
  const auto& cap_path = input(ctx, c.captions, "captions");
  const auto& out_path = output(ctx, c.report, "report");
  const auto ids = by_id(ego);

  std::vector<metrics::CaptionPair> corpus;
  const auto text = io::read_file_text(cap_path);
  std::size_t line_no = 0, begin = 0;
  while (begin <= text.size()) {
    auto end = text.find('\n', begin);
    if (end == std::string::npos) end = text.size();
    const auto line = text::trim(std::string_view(text).substr(begin, end - begin));
    ++line_no;
    begin = end + 1;
    if (line.empty()) continue;
    std::string clip, caption;
    try {
      const auto j = json::parse(line);
      clip = j.at("clip_id").get<std::string>();
      caption = j.at("caption").get<std::string>();
    } catch (const json::exception& e) {
      throw ParseError(cap_path, line_no, e.what());
    }
    auto it = ids.find(clip);
    if (it == ids.end()) throw ParseError(cap_path, line_no, "clip " + clip + " not in ego manifest");
    corpus.push_back({caption, {caption_text(*it->second)}});
  }
  if (corpus.empty()) throw ValidationError(cap_path + ": no captions");

  metrics::EvaluationReport report;
  report.task = "captioning";
  report.add("BLEU-4", metrics::bleu4(corpus), corpus.size());
  report.add("ROUGE-L", metrics::rouge_l(corpus), corpus.size());
  if (corpus.size() >= 2) report.add("CIDEr", metrics::cider(corpus), corpus.size());
  report.switches = {{"tokenization", "lowercase, punctuation stripped, whitespace split"},
                     {"bleu", "corpus level, closest reference length"},
                     {"cider_variant", "CIDEr (no length penalty, not CIDEr-D)"}};
  report.unavailable = {"METEOR"};
  write_report(ctx, report, out_path);
}

const std::map<std::string, std::pair<std::function<void(Context&)>, const char*>>& commands() {
  static const std::map<std::string, std::pair<std::function<void(Context&)>, const char*>> table = {
      {"mine-pairs", {cmd_mine_pairs, "rank same-scenario exo clips for every ego clip by entity overlap"}},
      {"refine-captions", {cmd_refine, "rewrite exo transcripts into captions (fallback rules or HTTP backend)"}},
      {"train-retrieval", {cmd_train_retrieval, "train the cross-view encoder and text adapter on mined pairs"}},
      {"build-index", {cmd_build_index, "embed exo clips into a retrieval index"}},
      {"retrieve", {cmd_retrieve, "rank index candidates for every ego clip"}},
      {"train-captioner", {cmd_train_captioner, "train the retrieval-augmented captioner"}},
      {"caption", {cmd_caption, "generate captions for ego clips"}},
      {"evaluate-retrieval", {cmd_evaluate_retrieval, "R@k, mAP, nDCG (and MCQ) for ego-to-exo retrieval"}},
      {"evaluate-captioning", {cmd_evaluate_captioning, "BLEU-4, ROUGE-L and CIDEr against ego references"}},
  };
  return table;
}

std::string primary_output(const Context& ctx) {
  for (const char* key : {"pairs", "refined_manifest", "retrieval_checkpoint", "index", "retrievals",
                          "captioner_checkpoint", "captions", "report"})
    if (ctx.outputs.contains(key)) return ctx.outputs[key].get<std::string>();
  return {};
}

void write_summary(const Context& ctx) {
  std::string path = ctx.cfg.summary;
  if (path.empty()) {
    const auto primary = primary_output(ctx);
    if (primary.empty()) return;
    path = primary + ".summary.json";
  }
  json s = {{"command", ctx.command},
            {"config", ctx.cfg.to_json()},
            {"config_hash", ctx.cfg.hash()},
            {"inputs", ctx.inputs},
            {"outputs", ctx.outputs},
            {"counts", ctx.counts}};
  io::write_file_text(path, s.dump(2) + "\n");
}

std::string scalar_text(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cross-view ego/exo retrieval and retrieval-augmented captioning toolkit", "egoexo"};
  app.require_subcommand(1);
  const auto defaults = RunConfig{}.to_json();

  struct Sub {
    CLI::App* app = nullptr;
    std::string config_path;
    bool print_config = false;
    std::map<std::string, std::string> overrides;
  };
  std::map<std::string, Sub> subs;
  for (const auto& [name, entry] : commands()) {
    auto& sub = subs[name];
    sub.app = app.add_subcommand(name, entry.second);
    sub.app->add_option("--config", sub.config_path, "JSON config file (flags override it)");
    sub.app->add_flag("--print-config", sub.print_config, "print the resolved config and exit");
    for (const auto& [key, value] : defaults.items()) {
      auto* opt = sub.app->add_option_function<std::string>(
          "--" + key, [&sub, key = key](const std::string& v) { sub.overrides[key] = v; },
          "default " + scalar_text(value));
      opt->type_name(value.is_string() ? "TEXT" : value.is_boolean() ? "BOOL" : "NUM");
    }
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return 0;
  } catch (const CLI::ParseError& e) {
    if (args.empty()) {
      err << app.help();
      return 2;
    }
    err << "error: " << e.what() << "\n" << app.help();
    return 2;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  auto& sub = subs.at(name);
  try {
    RunConfig cfg;
    if (const char* url = std::getenv("EGOEXO_REFINER_URL")) cfg.refiner_url = url;
    if (!sub.config_path.empty()) {
      json file;
      try {
        file = json::parse(io::read_file_text(sub.config_path));
      } catch (const json::parse_error& e) {
        throw ParseError(sub.config_path, 0, e.what());
      }
      cfg = with_path(sub.config_path, [&] { return RunConfig::merged(cfg, file); });
    }
    json flags = json::object();
    for (const auto& [key, value] : sub.overrides) flags[key] = parse_override(key, value);
    cfg = RunConfig::merged(cfg, flags);
    cfg.validate();

    if (sub.print_config) {
      out << cfg.to_json().dump(2) << "\n";
      return 0;
    }
    const auto j = cfg.to_json();
    out << name << ": config " << cfg.hash();
    for (const auto& key : echo_keys(name)) out << " " << key << "=" << scalar_text(j.at(key));
    out << "\n";

    Context ctx{cfg, name, out};
    commands().at(name).first(ctx);
    write_summary(ctx);
    out << name << ": done";
    for (const auto& [key, value] : ctx.counts.items()) out << " " << key << "=" << scalar_text(value);
    out << "\n";
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << name << ": " << e.what() << "\n";
    return 1;
  }
}

}  // namespace egoexo::cli
