#include "egoexo/metrics/caption_metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "egoexo/errors.hpp"

namespace egoexo::metrics {

std::vector<std::string> caption_tokens(std::string_view text) {
  std::string clean;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::ispunct(c)) continue;
    clean += static_cast<char>(std::tolower(c));
  }
  std::istringstream in(clean);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

NGramCounts ngram_counts(const std::vector<std::string>& tokens, int n) {
  NGramCounts out;
  const auto len = static_cast<std::size_t>(n);
  for (std::size_t i = 0; i + len <= tokens.size(); ++i)
    ++out[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                   tokens.begin() + static_cast<std::ptrdiff_t>(i + len))];
  return out;
}

namespace {

void check_corpus(const std::vector<CaptionPair>& corpus, const char* what) {
  if (corpus.empty()) throw ValidationError(std::string(what) + ": empty corpus");
  for (const auto& p : corpus)
    if (p.references.empty()) throw ValidationError(std::string(what) + ": pair without references");
}

}  // namespace

double bleu4(const std::vector<CaptionPair>& corpus) {
  check_corpus(corpus, "bleu4");
  double matched[4] = {0, 0, 0, 0}, total[4] = {0, 0, 0, 0};
  double hyp_len = 0.0, ref_len = 0.0;
  for (const auto& pair : corpus) {
    const auto hyp = caption_tokens(pair.hypothesis);
    std::vector<std::vector<std::string>> refs;
    for (const auto& r : pair.references) refs.push_back(caption_tokens(r));
    hyp_len += static_cast<double>(hyp.size());
    // Closest reference length, shorter on ties.
    std::size_t best = refs.front().size();
    for (const auto& r : refs) {
      const auto d = [&](std::size_t x) { return x > hyp.size() ? x - hyp.size() : hyp.size() - x; };
      if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
    }
    ref_len += static_cast<double>(best);
    for (int n = 1; n <= 4; ++n) {
      const auto h = ngram_counts(hyp, n);
      NGramCounts max_ref;
      for (const auto& r : refs)
        for (const auto& [g, c] : ngram_counts(r, n)) max_ref[g] = std::max(max_ref[g], c);
      for (const auto& [g, c] : h) {
        auto it = max_ref.find(g);
        matched[n - 1] += std::min(c, it == max_ref.end() ? 0 : it->second);
        total[n - 1] += c;
      }
    }
  }
  double log_sum = 0.0;
  for (int n = 0; n < 4; ++n) {
    if (matched[n] == 0.0) return 0.0;
    log_sum += std::log(matched[n] / total[n]);
  }
  const double bp = hyp_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / hyp_len);
  return bp * std::exp(log_sum / 4.0);
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const std::vector<CaptionPair>& corpus) {
  check_corpus(corpus, "rouge_l");
  double sum = 0.0;
  for (const auto& pair : corpus) {
    const auto hyp = caption_tokens(pair.hypothesis);
    double best = 0.0;
    for (const auto& r : pair.references) {
      const auto ref = caption_tokens(r);
      const auto l = static_cast<double>(lcs_length(hyp, ref));
      if (l == 0.0) continue;
      const double p = l / static_cast<double>(hyp.size());
      const double rc = l / static_cast<double>(ref.size());
      best = std::max(best, 2.0 * p * rc / (p + rc));
    }
    sum += best;
  }
  return sum / static_cast<double>(corpus.size());
}

namespace {

using Vec = std::map<std::vector<std::string>, double>;

Vec tfidf(const NGramCounts& counts, const std::map<std::vector<std::string>, int>& df, double log_n) {
  Vec v;
  for (const auto& [g, c] : counts) {
    auto it = df.find(g);
    const double d = it == df.end() ? 0.0 : static_cast<double>(it->second);
    v[g] = static_cast<double>(c) * (log_n - std::log(std::max(1.0, d)));
  }
  return v;
}

double cosine(const Vec& a, const Vec& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (const auto& [g, x] : a) {
    na += x * x;
    auto it = b.find(g);
    if (it != b.end()) dot += x * it->second;
  }
  for (const auto& [g, y] : b) nb += y * y;
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

double cider(const std::vector<CaptionPair>& corpus) {
  check_corpus(corpus, "cider");
  if (corpus.size() < 2) throw ValidationError("cider: corpus needs at least 2 pairs");
  const double log_n = std::log(static_cast<double>(corpus.size()));

  // Document frequency: number of pairs whose references contain the n-gram.
  std::map<std::vector<std::string>, int> df;
  std::vector<std::vector<std::vector<NGramCounts>>> ref_counts(corpus.size());  // pair, ref, n
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    std::set<std::vector<std::string>> seen;
    for (const auto& r : corpus[i].references) {
      const auto tok = caption_tokens(r);
      std::vector<NGramCounts> per_n;
      for (int n = 1; n <= 4; ++n) {
        per_n.push_back(ngram_counts(tok, n));
        for (const auto& [g, c] : per_n.back()) seen.insert(g);
      }
      ref_counts[i].push_back(std::move(per_n));
    }
    for (const auto& g : seen) ++df[g];
  }

  double sum = 0.0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto hyp = caption_tokens(corpus[i].hypothesis);
    double pair_score = 0.0;
    for (int n = 1; n <= 4; ++n) {
      const auto hv = tfidf(ngram_counts(hyp, n), df, log_n);
      double s = 0.0;
      for (const auto& rc : ref_counts[i]) s += cosine(hv, tfidf(rc[static_cast<std::size_t>(n - 1)], df, log_n));
      pair_score += s / static_cast<double>(ref_counts[i].size());
    }
    sum += 10.0 * pair_score / 4.0;
  }
  return sum / static_cast<double>(corpus.size());
}

}  // namespace egoexo::metrics
