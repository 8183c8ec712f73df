#include "egoexo/cli/run_config.hpp"

#include <cstdio>
#include <type_traits>

#include "egoexo/errors.hpp"
#include "egoexo/retrieval/encoder.hpp"

namespace egoexo::cli {

namespace {

template <class C, class F>
void visit(C& c, F&& f) {
  f("ego_manifest", c.ego_manifest);
  f("exo_manifest", c.exo_manifest);
  f("ego_features", c.ego_features);
  f("exo_features", c.exo_features);
  f("lexicon", c.lexicon);
  f("prompt", c.prompt);
  f("pairs", c.pairs);
  f("refined_manifest", c.refined_manifest);
  f("longform_manifest", c.longform_manifest);
  f("extended_exo_manifest", c.extended_exo_manifest);
  f("retrieval_checkpoint", c.retrieval_checkpoint);
  f("index", c.index);
  f("retrievals", c.retrievals);
  f("captioner_checkpoint", c.captioner_checkpoint);
  f("captions", c.captions);
  f("report", c.report);
  f("summary", c.summary);
  f("epochs", c.epochs);
  f("lr", c.lr);
  f("batch_size", c.batch_size);
  f("temperature", c.temperature);
  f("frames", c.frames);
  f("entity_rule", c.entity_rule);
  f("encoder_layers", c.encoder_layers);
  f("encoder_heads", c.encoder_heads);
  f("max_frames", c.max_frames);
  f("text_buckets", c.text_buckets);
  f("weight_decay", c.weight_decay);
  f("max_steps", c.max_steps);
  f("score_mode", c.score_mode);
  f("retrieve_k", c.retrieve_k);
  f("alpha", c.alpha);
  f("top_k", c.top_k);
  f("longform_min", c.longform_min);
  f("longform_max", c.longform_max);
  f("narrations_per_window", c.narrations_per_window);
  f("threads", c.threads);
  f("refiner", c.refiner);
  f("refiner_url", c.refiner_url);
  f("refiner_path", c.refiner_path);
  f("refiner_timeout_ms", c.refiner_timeout_ms);
  f("refiner_retries", c.refiner_retries);
  f("max_in_flight", c.max_in_flight);
  f("max_tokens", c.max_tokens);
  f("shots", c.shots);
  f("query_count", c.query_count);
  f("resampler_depth", c.resampler_depth);
  f("resampler_heads", c.resampler_heads);
  f("visual_dim", c.visual_dim);
  f("patch_tokens", c.patch_tokens);
  f("decoder_dim", c.decoder_dim);
  f("decoder_layers", c.decoder_layers);
  f("decoder_heads", c.decoder_heads);
  f("decoder_max_len", c.decoder_max_len);
  f("gated_interval", c.gated_interval);
  f("vocab_size", c.vocab_size);
  f("caption_epochs", c.caption_epochs);
  f("caption_lr", c.caption_lr);
  f("caption_batch_size", c.caption_batch_size);
  f("caption_max_steps", c.caption_max_steps);
  f("caption_weight_decay", c.caption_weight_decay);
  f("train_decoder", c.train_decoder);
  f("max_new_tokens", c.max_new_tokens);
  f("decoding", c.decoding);
  f("beam_width", c.beam_width);
  f("gain", c.gain);
  f("mcq_groups", c.mcq_groups);
  f("seed", c.seed);
}

template <class T>
void assign(const char* name, T& field, const nlohmann::json& v) {
  auto bad = [&](const char* want) {
    throw ValidationError(std::string("config field ") + name + ": expected " + want + ", got " + v.dump());
  };
  if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) bad("a string");
    field = v.get<std::string>();
  } else if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) bad("true or false");
    field = v.get<bool>();
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) bad("a number");
    field = v.get<T>();
  } else if constexpr (std::is_unsigned_v<T>) {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0))
      bad("a non-negative integer");
    field = v.get<T>();
  } else {
    if (!v.is_number_integer()) bad("an integer");
    field = v.get<T>();
  }
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError("config: " + msg);
}

}  // namespace

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  visit(*this, [&](const char* name, const auto& field) { j[name] = field; });
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) { return merged(RunConfig{}, j); }

RunConfig RunConfig::merged(const RunConfig& base, const nlohmann::json& overrides) {
  if (!overrides.is_object()) throw ValidationError("config must be a JSON object");
  RunConfig c = base;
  std::size_t matched = 0;
  visit(c, [&](const char* name, auto& field) {
    if (auto it = overrides.find(name); it != overrides.end()) {
      assign(name, field, *it);
      ++matched;
    }
  });
  if (matched != overrides.size()) {
    const auto known = RunConfig{}.to_json();
    for (const auto& [key, value] : overrides.items())
      if (!known.contains(key)) throw ValidationError("unknown config field \"" + key + "\"");
  }
  return c;
}

void RunConfig::validate() const {
  require(epochs >= 0, "epochs must be >= 0");
  require(lr > 0.0, "lr must be positive");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(temperature > 0.0, "temperature must be positive");
  require(frames >= 1, "frames must be >= 1");
  require(entity_rule == "and" || entity_rule == "or", "entity_rule must be and|or");
  require(encoder_layers >= 0, "encoder_layers must be >= 0");
  require(encoder_heads >= 1, "encoder_heads must be >= 1");
  require(max_frames >= frames, "max_frames must be >= frames");
  require(text_buckets >= 1, "text_buckets must be >= 1");
  require(weight_decay >= 0.0, "weight_decay must be >= 0");
  require(score_mode == "exp" || score_mode == "cosine", "score_mode must be exp|cosine");
  require(retrieve_k >= 1, "retrieve_k must be >= 1");
  require(alpha >= 0.0, "alpha must be >= 0");
  require(top_k >= 1, "top_k must be >= 1");
  require(longform_min > 0.0 && longform_min <= longform_max, "need 0 < longform_min <= longform_max");
  require(narrations_per_window >= 1, "narrations_per_window must be >= 1");
  require(threads >= 1, "threads must be >= 1");
  require(refiner == "fallback" || refiner == "http", "refiner must be fallback|http");
  require(refiner_timeout_ms > 0, "refiner_timeout_ms must be positive");
  require(refiner_retries >= 0, "refiner_retries must be >= 0");
  require(max_in_flight >= 1, "max_in_flight must be >= 1");
  require(max_tokens >= 1, "max_tokens must be >= 1");
  require(shots >= 0 && shots <= 8, "shots must be in [0, 8]");
  require(query_count >= 1, "query_count must be >= 1");
  require(resampler_depth >= 1, "resampler_depth must be >= 1");
  require(resampler_heads >= 1 && visual_dim % resampler_heads == 0, "visual_dim must be divisible by resampler_heads");
  require(patch_tokens >= 1, "patch_tokens must be >= 1");
  require(decoder_heads >= 1 && decoder_dim % decoder_heads == 0, "decoder_dim must be divisible by decoder_heads");
  require(decoder_layers >= 1, "decoder_layers must be >= 1");
  require(decoder_max_len >= 2, "decoder_max_len must be >= 2");
  require(gated_interval >= 1, "gated_interval must be >= 1");
  require(caption_epochs >= 0, "caption_epochs must be >= 0");
  require(caption_lr > 0.0, "caption_lr must be positive");
  require(caption_batch_size >= 1, "caption_batch_size must be >= 1");
  require(caption_weight_decay >= 0.0, "caption_weight_decay must be >= 0");
  require(max_new_tokens >= 1, "max_new_tokens must be >= 1");
  require(decoding == "greedy" || decoding == "beam", "decoding must be greedy|beam");
  require(beam_width >= 1, "beam_width must be >= 1");
  require(gain == "linear" || gain == "exponential", "gain must be linear|exponential");
}

std::string RunConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(retrieval::fnv1a64(to_json().dump())));
  return buf;
}

nlohmann::json parse_override(const std::string& key, const std::string& value) {
  const auto defaults = RunConfig{}.to_json();
  auto it = defaults.find(key);
  if (it == defaults.end()) throw ValidationError("unknown config field \"" + key + "\"");
  try {
    if (it->is_string()) return value;
    if (it->is_boolean()) {
      if (value == "true" || value == "1") return true;
      if (value == "false" || value == "0") return false;
      throw ValidationError("--" + key + ": expected true or false, got \"" + value + "\"");
    }
    std::size_t used = 0;
    nlohmann::json out;
    if (it->is_number_float()) {
      out = std::stod(value, &used);
    } else if (it->is_number_unsigned()) {
      if (!value.empty() && value[0] == '-') throw std::invalid_argument("negative");
      out = static_cast<std::uint64_t>(std::stoull(value, &used));
    } else {
      out = static_cast<std::int64_t>(std::stoll(value, &used));
    }
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return out;
  } catch (const std::logic_error&) {
    throw ValidationError("--" + key + ": cannot parse \"" + value + "\"");
  }
}

}  // namespace egoexo::cli
