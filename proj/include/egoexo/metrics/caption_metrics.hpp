#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace egoexo::metrics {

struct CaptionPair {
  std::string hypothesis;
  std::vector<std::string> references;
};

/// Lowercase, punctuation stripped, split on whitespace.
std::vector<std::string> caption_tokens(std::string_view text);

using NGramCounts = std::map<std::vector<std::string>, int>;
NGramCounts ngram_counts(const std::vector<std::string>& tokens, int n);

/// Corpus BLEU-4, uniform weights, clipped counts, closest-reference brevity penalty.
double bleu4(const std::vector<CaptionPair>& corpus);

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);
/// Mean over pairs of the best LCS F1 across references.
double rouge_l(const std::vector<CaptionPair>& corpus);

/// Plain CIDEr: tf-idf n-gram cosine (n=1..4) with idf over reference
/// documents, averaged over n and references, times 10, mean over pairs.
double cider(const std::vector<CaptionPair>& corpus);

}  // namespace egoexo::metrics
