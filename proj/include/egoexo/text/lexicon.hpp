#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace egoexo::text {

enum class PartOfSpeech { noun, verb, other };

struct LexiconEntry {
  std::string lemma;
  PartOfSpeech pos = PartOfSpeech::other;
};

struct EntityProfile {
  std::set<std::string> nouns;
  std::set<std::string> verbs;

  bool operator==(const EntityProfile&) const = default;
};

/// Surface form -> (lemma, part of speech) table plus stopwords. Lookups are
/// case-insensitive.
///
/// File format (UTF-8, tab separated, '#' starts a comment line):
///   surface<TAB>lemma<TAB>noun|verb|other
///   surface<TAB>-<TAB>stop
class TaggerLexicon {
 public:
  TaggerLexicon() = default;

  static TaggerLexicon load(const std::filesystem::path& path);
  static TaggerLexicon parse(std::string_view text, const std::string& source = "<memory>");

  /// Throws ValidationError if the surface form already exists or the lemma is
  /// not a lowercase, whitespace-free, non-empty string.
  void add(std::string_view surface, std::string_view lemma, PartOfSpeech pos);
  void add_stopword(std::string_view word);

  const LexiconEntry* lookup(std::string_view surface) const;
  bool is_stopword(std::string_view word) const;

  std::size_t size() const { return entries_.size(); }
  /// Surface forms in sorted order, for serialization and test oracles.
  std::vector<std::string> surfaces() const;
  std::vector<std::string> stopwords() const;

 private:
  std::unordered_map<std::string, LexiconEntry> entries_;
  std::unordered_set<std::string> stopwords_;
};

struct TaggedToken {
  std::string surface;  // lowercased
  std::string lemma;
  PartOfSpeech pos = PartOfSpeech::other;
};

/// Pluggable part-of-speech tagger.
class Tagger {
 public:
  virtual ~Tagger() = default;
  /// Tags every non-stopword token that the tagger recognizes.
  virtual std::vector<TaggedToken> tag(std::string_view text) const = 0;
};

class LexiconTagger final : public Tagger {
 public:
  explicit LexiconTagger(const TaggerLexicon& lexicon) : lexicon_(&lexicon) {}
  std::vector<TaggedToken> tag(std::string_view text) const override;

 private:
  const TaggerLexicon* lexicon_;
};

EntityProfile extract_entities(std::string_view text, const Tagger& tagger);
EntityProfile extract_entities(std::string_view text, const TaggerLexicon& lexicon);

}  // namespace egoexo::text
