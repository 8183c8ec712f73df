#include "egoexo/text/lexicon.hpp"

#include <algorithm>
#include <sstream>

#include "egoexo/errors.hpp"
#include "egoexo/io.hpp"
#include "egoexo/text/normalize.hpp"

namespace egoexo::text {
namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find('\t', start);
    parts.push_back(trim(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return parts;
}

bool valid_lemma(std::string_view lemma) {
  if (lemma.empty()) return false;
  for (char c : lemma) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') return false;
    if (c >= 'A' && c <= 'Z') return false;
  }
  return true;
}

}  // namespace

TaggerLexicon TaggerLexicon::load(const std::filesystem::path& path) {
  return parse(io::read_file_text(path), path.string());
}

TaggerLexicon TaggerLexicon::parse(std::string_view text, const std::string& source) {
  TaggerLexicon lex;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto parts = split_tabs(line);
    if (parts.size() != 3) throw ParseError(source, line_no, "expected surface<TAB>lemma<TAB>pos");
    try {
      const auto& pos = parts[2];
      if (pos == "stop") {
        lex.add_stopword(parts[0]);
      } else if (pos == "noun") {
        lex.add(parts[0], parts[1], PartOfSpeech::noun);
      } else if (pos == "verb") {
        lex.add(parts[0], parts[1], PartOfSpeech::verb);
      } else if (pos == "other") {
        lex.add(parts[0], parts[1], PartOfSpeech::other);
      } else {
        throw ValidationError("unknown part of speech \"" + pos + "\"");
      }
    } catch (const ValidationError& e) {
      throw ParseError(source, line_no, e.what());
    }
  }
  return lex;
}

void TaggerLexicon::add(std::string_view surface, std::string_view lemma, PartOfSpeech pos) {
  auto key = to_lower_ascii(surface);
  if (key.empty()) throw ValidationError("empty surface form");
  if (!valid_lemma(lemma)) throw ValidationError("invalid lemma \"" + std::string(lemma) + "\"");
  if (entries_.count(key) || stopwords_.count(key))
    throw ValidationError("surface form \"" + key + "\" defined twice");
  entries_.emplace(std::move(key), LexiconEntry{std::string(lemma), pos});
}

void TaggerLexicon::add_stopword(std::string_view word) {
  auto key = to_lower_ascii(word);
  if (key.empty()) throw ValidationError("empty stopword");
  if (entries_.count(key) || stopwords_.count(key))
    throw ValidationError("surface form \"" + key + "\" defined twice");
  stopwords_.insert(std::move(key));
}

const LexiconEntry* TaggerLexicon::lookup(std::string_view surface) const {
  auto it = entries_.find(to_lower_ascii(surface));
  return it == entries_.end() ? nullptr : &it->second;
}

bool TaggerLexicon::is_stopword(std::string_view word) const {
  return stopwords_.count(to_lower_ascii(word)) != 0;
}

std::vector<std::string> TaggerLexicon::surfaces() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [k, v] : entries_) out.push_back(k);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> TaggerLexicon::stopwords() const {
  std::vector<std::string> out(stopwords_.begin(), stopwords_.end());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<TaggedToken> LexiconTagger::tag(std::string_view text) const {
  std::vector<TaggedToken> out;
  for (auto& tok : word_tokens(text)) {
    if (lexicon_->is_stopword(tok)) continue;
    if (const auto* e = lexicon_->lookup(tok)) out.push_back({tok, e->lemma, e->pos});
  }
  return out;
}

EntityProfile extract_entities(std::string_view text, const Tagger& tagger) {
  EntityProfile profile;
  for (const auto& t : tagger.tag(text)) {
    if (t.pos == PartOfSpeech::noun) profile.nouns.insert(t.lemma);
    if (t.pos == PartOfSpeech::verb) profile.verbs.insert(t.lemma);
  }
  return profile;
}

EntityProfile extract_entities(std::string_view text, const TaggerLexicon& lexicon) {
  return extract_entities(text, LexiconTagger(lexicon));
}

}  // namespace egoexo::text
