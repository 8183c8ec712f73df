#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

namespace egoexo::cli {

/// Every knob of the pipeline in one flat record. JSON keys and command-line
/// overrides (`--<field>`) use the field names verbatim.
struct RunConfig {
  // Paths. Empty means unset.
  std::string ego_manifest, exo_manifest, ego_features, exo_features;
  std::string lexicon, prompt;
  std::string pairs;                  // mined pairs (mine-pairs output)
  std::string refined_manifest;       // refine-captions output
  std::string longform_manifest;      // optional refine-captions output
  std::string extended_exo_manifest;  // optional mine-pairs output, [s - alpha, e + alpha]
  std::string retrieval_checkpoint, index, retrievals;
  std::string captioner_checkpoint, captions, report;
  std::string summary;  // run summary path; default <primary output>.summary.json

  // Retrieval.
  int epochs = 5;
  double lr = 3e-5;
  std::size_t batch_size = 4096;
  double temperature = 0.05;
  int frames = 4;
  std::string entity_rule = "and";
  int encoder_layers = 4;
  int encoder_heads = 8;
  int max_frames = 32;
  int text_buckets = 4096;
  double weight_decay = 0.01;
  std::size_t max_steps = 0;
  std::string score_mode = "exp";
  std::size_t retrieve_k = 10;

  // Mining.
  double alpha = 1.0;
  std::size_t top_k = 1;
  double longform_min = 60.0;
  double longform_max = 300.0;
  std::size_t narrations_per_window = 20;
  std::size_t threads = 1;

  // Refinement.
  std::string refiner = "fallback";  // fallback | http
  std::string refiner_url;           // default from EGOEXO_REFINER_URL
  std::string refiner_path = "/v1/generate";
  int refiner_timeout_ms = 30000;
  int refiner_retries = 2;
  std::size_t max_in_flight = 4;
  int max_tokens = 1024;

  // Captioning.
  int shots = 1;
  int query_count = 64;
  int resampler_depth = 6;
  int resampler_heads = 8;
  int visual_dim = 64;
  int patch_tokens = 16;
  int decoder_dim = 64;
  int decoder_layers = 2;
  int decoder_heads = 4;
  int decoder_max_len = 256;
  int gated_interval = 1;
  std::size_t vocab_size = 0;
  int caption_epochs = 3;
  double caption_lr = 1e-5;
  std::size_t caption_batch_size = 8;
  std::size_t caption_max_steps = 0;
  double caption_weight_decay = 0.0;
  bool train_decoder = true;
  int max_new_tokens = 20;
  std::string decoding = "greedy";
  int beam_width = 3;

  // Evaluation.
  std::string gain = "linear";
  std::string mcq_groups;  // optional JSONL of candidate groups

  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  /// Unknown keys and wrongly typed values raise ValidationError.
  static RunConfig from_json(const nlohmann::json& j);
  /// `base` with the keys of `overrides` replacing its values.
  static RunConfig merged(const RunConfig& base, const nlohmann::json& overrides);
  void validate() const;
  /// FNV-1a of the canonical JSON text, as 16 hex digits.
  std::string hash() const;
};

/// Parses a command-line value into the JSON type of `key`'s default.
nlohmann::json parse_override(const std::string& key, const std::string& value);

}  // namespace egoexo::cli
