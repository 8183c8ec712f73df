#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace egoexo::text {

/// Removes character-indicator tags ("#C", "#O", "#unsure", ...), collapses
/// whitespace runs to one space and trims both ends. Idempotent.
std::string normalize_caption(std::string_view text);

/// Lowercases ASCII letters and splits on anything that is not a letter,
/// digit, apostrophe or non-ASCII byte. Leading/trailing apostrophes are
/// dropped from each token.
std::vector<std::string> word_tokens(std::string_view text);

std::string to_lower_ascii(std::string_view text);
std::string trim(std::string_view text);

}  // namespace egoexo::text
