#include "egoexo/captioning/prompt.hpp"

#include "egoexo/errors.hpp"

namespace egoexo::captioning {

void index_media(PromptSequence& prompt) {
  prompt.media_positions.clear();
  prompt.chunk_map.assign(prompt.tokens.size(), -1);
  int current = -1;
  for (std::size_t p = 0; p < prompt.tokens.size(); ++p) {
    if (prompt.tokens[p] == Vocabulary::kVideo) {
      prompt.media_positions.push_back(p);
      ++current;
    }
    prompt.chunk_map[p] = current;
  }
  prompt.loss_mask.resize(prompt.tokens.size(), false);
}

PromptSequence build_prompt(std::span<const std::string> exo_captions, const Vocabulary& vocab) {
  PromptSequence prompt;
  for (const auto& caption : exo_captions) {
    if (caption.find("<video>") != std::string::npos || caption.find("<eoc>") != std::string::npos)
      throw ValidationError("caption contains a reserved media token: \"" + caption + "\"");
    prompt.tokens.push_back(Vocabulary::kVideo);
    auto ids = vocab.encode(caption);
    prompt.tokens.insert(prompt.tokens.end(), ids.begin(), ids.end());
    prompt.tokens.push_back(Vocabulary::kEoc);
  }
  prompt.tokens.push_back(Vocabulary::kVideo);
  prompt.loss_mask.assign(prompt.tokens.size(), false);
  index_media(prompt);
  return prompt;
}

void append_target(PromptSequence& prompt, std::span<const int> target_ids) {
  const int ego = prompt.chunk_map.empty() ? 0 : prompt.chunk_map.back();
  auto push = [&](int id) {
    prompt.tokens.push_back(id);
    prompt.chunk_map.push_back(ego);
    prompt.loss_mask.push_back(true);
  };
  for (int id : target_ids) push(id);
  push(Vocabulary::kEos);
}

PromptSequence parse_prompt(std::string_view text, const Vocabulary& vocab) {
  PromptSequence prompt;
  prompt.tokens = vocab.encode_with_specials(text);
  prompt.loss_mask.assign(prompt.tokens.size(), false);
  index_media(prompt);
  return prompt;
}

}  // namespace egoexo::captioning
