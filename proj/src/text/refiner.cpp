#include "egoexo/text/refiner.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <regex>
#include <sstream>
#include <thread>
#include <unordered_set>

#include <httplib.h>
#include <json.hpp>

#include "egoexo/errors.hpp"
#include "egoexo/io.hpp"
#include "egoexo/text/normalize.hpp"

namespace egoexo::text {
namespace {

std::vector<std::string> split_on(const std::string& s, const std::string& sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string::npos ? std::string::npos : pos - start)));
    if (pos == std::string::npos) break;
    start = pos + sep.size();
  }
  return out;
}

std::string format_time(double s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", s);
  return buf;
}

bool contains(const std::vector<std::string>& list, const std::string& s) {
  return std::find(list.begin(), list.end(), s) != list.end();
}

std::string strip_terminal_punct(std::string s) {
  while (!s.empty() && (s.back() == '.' || s.back() == '!' || s.back() == '?' || s.back() == ' '))
    s.pop_back();
  return s;
}

}  // namespace

RefinementPrompt RefinementPrompt::load(const std::filesystem::path& path) {
  return parse(io::read_file_text(path), path.string());
}

RefinementPrompt RefinementPrompt::parse(std::string_view text, const std::string& source) {
  RefinementPrompt p;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(source, line_no, "expected kind<TAB>content");
    auto kind = trim(line.substr(0, tab));
    auto rest = line.substr(tab + 1);
    if (kind == "instruction") {
      if (!p.instructions.empty()) p.instructions += '\n';
      p.instructions += trim(rest);
    } else if (kind == "rule") {
      p.rules.push_back(trim(rest));
    } else if (kind == "example") {
      auto tab2 = rest.find('\t');
      if (tab2 == std::string::npos)
        throw ParseError(source, line_no, "example needs narrations<TAB>captions");
      p.examples.emplace_back(trim(rest.substr(0, tab2)), trim(rest.substr(tab2 + 1)));
    } else {
      throw ParseError(source, line_no, "unknown line kind \"" + kind + "\"");
    }
  }
  try {
    p.validate();
  } catch (const ValidationError& e) {
    throw ParseError(source, line_no, e.what());
  }
  return p;
}

void RefinementPrompt::validate() const {
  if (rules.size() != 10)
    throw ValidationError("refinement prompt needs exactly 10 rules, got " + std::to_string(rules.size()));
}

std::string render_refinement_prompt(const RefinementPrompt& prompt,
                                     const data::TranscriptDocument& doc) {
  prompt.validate();
  std::string out = prompt.instructions;
  out += "\n\nRules:\n";
  for (std::size_t i = 0; i < prompt.rules.size(); ++i)
    out += std::to_string(i + 1) + ". " + prompt.rules[i] + "\n";
  for (const auto& [narrations, captions] : prompt.examples) {
    out += "\nExample transcript:\n";
    auto ns = split_on(narrations, "||");
    for (std::size_t i = 0; i < ns.size(); ++i) out += std::to_string(i + 1) + ". " + ns[i] + "\n";
    out += "Example captions:\n";
    auto cs = split_on(captions, "||");
    for (std::size_t i = 0; i < cs.size(); ++i) out += std::to_string(i + 1) + ". " + cs[i] + "\n";
  }
  out += "\nTranscript of video " + doc.video_id + " (" + std::to_string(doc.narrations.size()) +
         " narrations):\n";
  for (std::size_t i = 0; i < doc.narrations.size(); ++i) {
    const auto& n = doc.narrations[i];
    out += std::to_string(i + 1) + ". [" + format_time(n.start_s) + "-" + format_time(n.end_s) +
           "] " + n.text + "\n";
  }
  out += "Captions (exactly " + std::to_string(doc.narrations.size()) +
         ", numbered, one per line):\n";
  return out;
}

std::string render_summary_prompt(const std::vector<std::string>& texts) {
  std::string out =
      "Summarise the following consecutive narrations of one video into a single descriptive "
      "sentence about the main activity. Answer with the sentence only.\n";
  for (std::size_t i = 0; i < texts.size(); ++i) out += std::to_string(i + 1) + ". " + texts[i] + "\n";
  out += "Summary:\n";
  return out;
}

std::vector<std::string> parse_caption_list(const std::string& response, std::size_t expected) {
  static const std::regex enumerator(R"(^\s*(?:\d+\s*[.):]|[-*•])\s*)");
  std::vector<std::string> captions;
  std::istringstream in(response);
  std::string line;
  while (std::getline(in, line)) {
    auto t = trim(line);
    if (t.empty()) continue;
    t = trim(std::regex_replace(t, enumerator, "", std::regex_constants::format_first_only));
    if (t.empty()) continue;
    captions.push_back(std::move(t));
  }
  if (captions.size() != expected)
    throw RefinementError("expected " + std::to_string(expected) + " captions, backend returned " +
                              std::to_string(captions.size()),
                          response);
  return captions;
}

std::string third_person_singular(std::string_view lemma) {
  std::string v(lemma);
  if (v == "be") return "is";
  if (v == "have") return "has";
  if (v.empty()) return v;
  auto ends = [&](std::string_view suf) {
    return v.size() >= suf.size() && v.compare(v.size() - suf.size(), suf.size(), suf) == 0;
  };
  if (ends("s") || ends("x") || ends("z") || ends("ch") || ends("sh") || ends("o")) return v + "es";
  if (ends("y") && v.size() >= 2 && std::string_view("aeiou").find(v[v.size() - 2]) == std::string_view::npos)
    return v.substr(0, v.size() - 1) + "ies";
  return v + "s";
}

std::string RuleBasedRefiner::refine_one(std::string_view narration) const {
  std::vector<std::string> kept;
  for (auto& tok : word_tokens(narration)) {
    if (!contains(rules_.fillers, tok)) kept.push_back(std::move(tok));
  }
  if (kept.empty()) return "";

  std::vector<std::string> out;
  std::size_t i = 0;
  bool has_subject = false;
  if (contains(rules_.subjects, kept[0])) {
    has_subject = true;
    out.push_back(rules_.subject_replacement);
    i = 1;
    while (i < kept.size() && contains(rules_.auxiliaries, kept[i])) ++i;
  } else if (const auto* e = lexicon_->lookup(kept[0]); e && e->pos == PartOfSpeech::verb) {
    has_subject = true;
    out.push_back(rules_.subject_replacement);
  }

  bool verb_done = !has_subject;
  for (; i < kept.size(); ++i) {
    if (!verb_done) {
      const auto* e = lexicon_->lookup(kept[i]);
      if (e && e->pos == PartOfSpeech::verb) {
        out.push_back(third_person_singular(e->lemma));
        verb_done = true;
        continue;
      }
    }
    out.push_back(kept[i]);
  }

  std::string sentence;
  for (const auto& w : out) {
    if (!sentence.empty()) sentence += ' ';
    sentence += w;
  }
  if (sentence[0] >= 'a' && sentence[0] <= 'z') sentence[0] = static_cast<char>(sentence[0] - 'a' + 'A');
  sentence += '.';
  return sentence;
}

std::vector<std::string> RuleBasedRefiner::refine(const data::TranscriptDocument& doc,
                                                  const RefinementPrompt&) const {
  std::vector<std::string> out;
  out.reserve(doc.narrations.size());
  for (const auto& n : doc.narrations) out.push_back(refine_one(n.text));
  return out;
}

std::string RuleBasedRefiner::summarize(const std::vector<std::string>& texts) const {
  if (texts.empty()) return "";
  if (texts.size() == 1) return texts[0];

  std::vector<std::string> parts;
  std::unordered_set<std::string> seen;
  std::string first_original;
  for (const auto& t : texts) {
    auto trimmed = trim(t);
    if (trimmed.empty()) continue;
    auto key = to_lower_ascii(strip_terminal_punct(trimmed));
    if (!seen.insert(key).second) continue;
    if (parts.empty()) first_original = t;
    parts.push_back(strip_terminal_punct(trimmed));
  }
  if (parts.empty()) return "";
  if (parts.size() == 1) return first_original;
  if (parts.size() > rules_.max_summary_parts) parts.resize(rules_.max_summary_parts);

  std::string out = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) {
    auto p = parts[i];
    if (!p.empty() && p[0] >= 'A' && p[0] <= 'Z') p[0] = static_cast<char>(p[0] - 'A' + 'a');
    out += ", then " + p;
  }
  out += '.';
  return out;
}

std::string HttpTextGenerationClient::complete(const std::string& prompt, int max_tokens) const {
  nlohmann::json body{{"prompt", prompt}, {"max_tokens", max_tokens}};
  const auto payload = body.dump();
  std::string last_error;
  for (int attempt = 0; attempt <= std::max(0, cfg_.retries); ++attempt) {
    httplib::Client client(cfg_.base_url);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    auto res = client.Post(cfg_.path, payload, "application/json");
    if (!res) {
      last_error = "request to " + cfg_.base_url + cfg_.path + " failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      last_error = "backend returned HTTP " + std::to_string(res->status);
      continue;
    }
    nlohmann::json reply;
    try {
      reply = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception&) {
      throw RefinementError("backend response is not JSON", res->body);
    }
    if (!reply.is_object() || !reply.contains("text") || !reply["text"].is_string())
      throw RefinementError("backend response has no \"text\" string", res->body);
    return reply["text"].get<std::string>();
  }
  throw TransportError(last_error + " (after " + std::to_string(std::max(0, cfg_.retries) + 1) +
                       " attempts)");
}

std::vector<std::string> LlmRefiner::refine(const data::TranscriptDocument& doc,
                                            const RefinementPrompt& prompt) const {
  if (doc.narrations.empty()) return {};
  auto response = client_->complete(render_refinement_prompt(prompt, doc), max_tokens_);
  return parse_caption_list(response, doc.narrations.size());
}

std::string LlmRefiner::summarize(const std::vector<std::string>& texts) const {
  if (texts.empty()) return "";
  auto response = client_->complete(render_summary_prompt(texts), max_tokens_);
  std::istringstream in(response);
  std::string line;
  while (std::getline(in, line)) {
    auto t = trim(line);
    if (!t.empty()) return t;
  }
  throw RefinementError("backend returned an empty summary", response);
}

std::vector<std::vector<std::string>> refine_documents(
    const std::vector<data::TranscriptDocument>& docs, const RefinementPrompt& prompt,
    const Refiner& refiner, std::size_t max_in_flight) {
  std::vector<std::vector<std::string>> results(docs.size());
  std::vector<std::exception_ptr> errors(docs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < docs.size(); i = next++) {
      try {
        results[i] = refiner.refine(docs[i], prompt);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(max_in_flight, 1, std::max<std::size_t>(1, docs.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

}  // namespace egoexo::text
