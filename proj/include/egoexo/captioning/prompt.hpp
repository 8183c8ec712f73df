#pragma once

#include <span>
#include <string>
#include <vector>

#include "egoexo/captioning/vocabulary.hpp"

namespace egoexo::captioning {

/// Token sequence for the captioner:
///   <video> t_1 <eoc> ... <video> t_K <eoc> <video> [target <eos>]
/// `chunk_map[p]` is the clip (0..K, K = ego) whose visual tokens position p
/// may attend to: the number of <video> tokens at or before p, minus one.
struct PromptSequence {
  std::vector<int> tokens;
  std::vector<std::size_t> media_positions;
  std::vector<int> chunk_map;
  std::vector<bool> loss_mask;  // true only on ego target tokens

  std::size_t size() const { return tokens.size(); }
  std::size_t video_count() const { return media_positions.size(); }
};

/// Throws ValidationError if a caption contains "<video>" or "<eoc>".
PromptSequence build_prompt(std::span<const std::string> exo_captions, const Vocabulary& vocab);

/// Appends target ids followed by <eos>, all with loss mask true.
void append_target(PromptSequence& prompt, std::span<const int> target_ids);

/// Rebuilds a prompt from detokenized text (see Vocabulary::encode_with_specials).
PromptSequence parse_prompt(std::string_view text, const Vocabulary& vocab);

/// Recomputes media positions and the chunk map from tokens.
void index_media(PromptSequence& prompt);

}  // namespace egoexo::captioning
