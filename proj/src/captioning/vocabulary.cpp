#include "egoexo/captioning/vocabulary.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "egoexo/errors.hpp"
#include "egoexo/text/normalize.hpp"

namespace egoexo::captioning {

Vocabulary::Vocabulary() {
  for (const char* t : {"<pad>", "<unk>", "<video>", "<eoc>", "<eos>"}) push(t);
}

void Vocabulary::push(std::string token) {
  ids_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(std::move(token));
}

Vocabulary Vocabulary::build(std::span<const std::string> texts, std::size_t max_size) {
  std::map<std::string, std::size_t> counts;
  for (const auto& t : texts)
    for (const auto& w : text::word_tokens(text::normalize_caption(t))) ++counts[w];
  std::vector<std::pair<std::string, std::size_t>> ordered(counts.begin(), counts.end());
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  for (auto& [w, c] : ordered) {
    if (max_size && v.tokens_.size() >= max_size) break;
    v.push(w);
  }
  return v;
}

std::optional<int> Vocabulary::find(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

std::vector<int> Vocabulary::encode(std::string_view caption) const {
  std::vector<int> ids;
  for (const auto& w : text::word_tokens(text::normalize_caption(caption))) {
    auto id = find(w);
    ids.push_back(id && !is_special(*id) ? *id : kUnk);
  }
  return ids;
}

std::vector<int> Vocabulary::encode_with_specials(std::string_view text) const {
  std::vector<int> ids;
  std::istringstream in{std::string(text)};
  std::string piece;
  while (in >> piece) {
    if (auto id = find(piece); id && is_special(*id)) {
      ids.push_back(*id);
      continue;
    }
    auto words = encode(piece);
    ids.insert(ids.end(), words.begin(), words.end());
  }
  return ids;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (!out.empty()) out += ' ';
    out += token(id);
  }
  return out;
}

std::string Vocabulary::decode_words(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (is_special(id)) continue;
    if (!out.empty()) out += ' ';
    out += token(id);
  }
  return out;
}

nlohmann::json Vocabulary::to_json() const {
  return nlohmann::json(std::vector<std::string>(tokens_.begin() + kReserved, tokens_.end()));
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  Vocabulary v;
  for (const auto& w : j.get<std::vector<std::string>>()) {
    if (v.ids_.count(w)) throw FormatError("vocabulary repeats token " + w);
    v.push(w);
  }
  return v;
}

}  // namespace egoexo::captioning
