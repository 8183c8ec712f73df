#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "egoexo/data/types.hpp"
#include "egoexo/text/lexicon.hpp"

namespace egoexo::text {

/// Prompt template sent to a text-generation backend when refining a whole
/// transcript in one request.
///
/// File format (UTF-8, tab separated, '#' comment lines):
///   instruction<TAB>text              repeated lines are joined by newlines
///   rule<TAB>text                     exactly ten
///   example<TAB>narrations<TAB>captions   items separated by " || "
struct RefinementPrompt {
  std::string instructions;
  std::vector<std::string> rules;
  std::vector<std::pair<std::string, std::string>> examples;

  static RefinementPrompt load(const std::filesystem::path& path);
  static RefinementPrompt parse(std::string_view text, const std::string& source = "<memory>");
  /// Throws ValidationError unless there are exactly ten rules.
  void validate() const;
};

/// Full prompt for one transcript document.
std::string render_refinement_prompt(const RefinementPrompt& prompt,
                                     const data::TranscriptDocument& doc);
std::string render_summary_prompt(const std::vector<std::string>& texts);

/// Splits a backend answer into exactly `expected` captions. Enumerators like
/// "3." or "- " are stripped and blank lines skipped. Throws RefinementError
/// carrying the raw response when the count differs.
std::vector<std::string> parse_caption_list(const std::string& response, std::size_t expected);

/// Backend that turns a transcript into descriptive captions and narration
/// windows into one-sentence summaries.
class Refiner {
 public:
  virtual ~Refiner() = default;
  /// Returns one caption per narration, index aligned.
  virtual std::vector<std::string> refine(const data::TranscriptDocument& doc,
                                          const RefinementPrompt& prompt) const = 0;
  virtual std::string summarize(const std::vector<std::string>& texts) const = 0;
};

struct FallbackRules {
  std::vector<std::string> fillers = {
      "so",    "okay",  "ok",        "gonna",    "gotta",  "wanna",   "just",  "now",
      "um",    "uh",    "hi",        "hello",    "hey",    "guys",    "alright", "yeah",
      "well",  "basically", "actually", "really", "welcome", "everyone"};
  std::vector<std::string> subjects = {"i",  "i'm",  "im",    "i'll", "i've", "i'd",
                                       "we", "we're", "we'll", "we've", "let's"};
  /// Skipped between a rewritten subject and its verb ("I am going to cut").
  std::vector<std::string> auxiliaries = {"am", "are", "will", "going", "to", "want", "need",
                                          "about", "be"};
  std::string subject_replacement = "The person";
  std::size_t max_summary_parts = 3;
};

/// Deterministic offline refiner.
///
/// Per narration: tokens are lowercased with punctuation stripped; filler
/// tokens are dropped; a first-person subject becomes "The person" and the
/// auxiliaries after it are skipped; the first lexicon verb after the subject
/// is rewritten to third-person present from its lemma ("toasting" ->
/// "toasts"). A narration that starts with a lexicon verb gets the subject
/// prepended. The first letter is capitalized and a single period closes the
/// sentence. A narration left empty after filtering yields "".
///
/// Summaries: a single input is returned unchanged; otherwise inputs are
/// trimmed, empties dropped, de-duplicated case-insensitively (ignoring a
/// trailing period), truncated to `max_summary_parts`, and joined with
/// ", then " into one period-terminated sentence.
class RuleBasedRefiner final : public Refiner {
 public:
  explicit RuleBasedRefiner(const TaggerLexicon& lexicon, FallbackRules rules = {})
      : lexicon_(&lexicon), rules_(std::move(rules)) {}

  std::string refine_one(std::string_view narration) const;
  std::vector<std::string> refine(const data::TranscriptDocument& doc,
                                  const RefinementPrompt& prompt) const override;
  std::string summarize(const std::vector<std::string>& texts) const override;

 private:
  const TaggerLexicon* lexicon_;
  FallbackRules rules_;
};

/// Third-person singular present form of a verb lemma.
std::string third_person_singular(std::string_view lemma);

/// Request {prompt, max_tokens} -> response {text}.
class TextGenerationClient {
 public:
  virtual ~TextGenerationClient() = default;
  /// Throws TransportError on connection failure or non-2xx status, and
  /// RefinementError when the body has no "text" string.
  virtual std::string complete(const std::string& prompt, int max_tokens) const = 0;
};

struct HttpClientConfig {
  std::string base_url = "http://127.0.0.1:8080";
  std::string path = "/v1/generate";
  std::chrono::milliseconds timeout{30000};
  int retries = 2;  // extra attempts after the first
};

class HttpTextGenerationClient final : public TextGenerationClient {
 public:
  explicit HttpTextGenerationClient(HttpClientConfig cfg) : cfg_(std::move(cfg)) {}
  std::string complete(const std::string& prompt, int max_tokens) const override;

 private:
  HttpClientConfig cfg_;
};

class LlmRefiner final : public Refiner {
 public:
  LlmRefiner(std::shared_ptr<const TextGenerationClient> client, int max_tokens = 1024)
      : client_(std::move(client)), max_tokens_(max_tokens) {}

  std::vector<std::string> refine(const data::TranscriptDocument& doc,
                                  const RefinementPrompt& prompt) const override;
  std::string summarize(const std::vector<std::string>& texts) const override;

 private:
  std::shared_ptr<const TextGenerationClient> client_;
  int max_tokens_;
};

/// Refines documents with at most `max_in_flight` concurrent backend calls.
/// Results are index aligned with `docs`; the first failure (by document
/// order) is rethrown after all workers finish.
std::vector<std::vector<std::string>> refine_documents(
    const std::vector<data::TranscriptDocument>& docs, const RefinementPrompt& prompt,
    const Refiner& refiner, std::size_t max_in_flight = 4);

}  // namespace egoexo::text
