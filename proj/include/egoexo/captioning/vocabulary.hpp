#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace egoexo::captioning {

/// Whitespace/lexical word vocabulary with reserved media tokens.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kVideo = 2;
  static constexpr int kEoc = 3;
  static constexpr int kEos = 4;
  static constexpr int kReserved = 5;

  Vocabulary();

  /// Words from `texts` ordered by frequency (desc) then spelling; at most
  /// `max_size` entries in total including reserved ones (0 = unlimited).
  static Vocabulary build(std::span<const std::string> texts, std::size_t max_size = 0);

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::optional<int> find(std::string_view token) const;
  static bool is_special(int id) { return id < kReserved; }

  /// Caption words to ids (unknown words map to kUnk).
  std::vector<int> encode(std::string_view caption) const;
  /// Like encode, but whitespace-separated "<video>", "<eoc>", "<eos>",
  /// "<unk>" and "<pad>" map to their reserved ids.
  std::vector<int> encode_with_specials(std::string_view text) const;
  std::string decode(std::span<const int> ids) const;
  /// Words only, specials dropped.
  std::string decode_words(std::span<const int> ids) const;

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);

 private:
  void push(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

}  // namespace egoexo::captioning
