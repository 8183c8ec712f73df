#pragma once

// Direct, unoptimized restatements of the definitions, used as references.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "egoexo/data/types.hpp"
#include "egoexo/mining/pair_mining.hpp"
#include "egoexo/retrieval/loss.hpp"
#include "egoexo/text/lexicon.hpp"
#include "egoexo/text/normalize.hpp"

namespace oracle {

inline bool shares(const std::set<std::string>& a, const std::set<std::string>& b) {
  for (const auto& x : a)
    if (b.count(x)) return true;
  return false;
}

/// Mask entry for video anchor row r against text column col, 2B x 2B.
inline bool positive(const std::vector<egoexo::retrieval::SampleEntities>& batch, bool need_both, long r,
                     long col) {
  const long B = static_cast<long>(batch.size());
  const long i = r % B;
  const long j = col % B;
  if (i == j) return true;
  const bool ego_text = col < B;
  const auto& a = ego_text ? batch[i].ego : batch[i].exo;
  const auto& b = ego_text ? batch[j].ego : batch[j].exo;
  const bool n = shares(a.nouns, b.nouns);
  const bool v = shares(a.verbs, b.verbs);
  return need_both ? (n && v) : (n || v);
}

/// Video-to-text plus text-to-video loss, straight from the definition.
inline double egoexo_nce(const Eigen::MatrixXd& zego, const Eigen::MatrixXd& zexo, const Eigen::MatrixXd& uego,
                         const Eigen::MatrixXd& uexo, const std::vector<egoexo::retrieval::SampleEntities>& ents,
                         bool need_both, double tau) {
  const long B = zego.rows();
  auto video = [&](long r) -> Eigen::RowVectorXd { return r < B ? zego.row(r) : zexo.row(r - B); };
  auto textv = [&](long c) -> Eigen::RowVectorXd { return c < B ? uego.row(c) : uexo.row(c - B); };
  auto sim = [&](long r, long c) { return std::exp(static_cast<long double>(video(r).dot(textv(c)) / tau)); };
  long double v2t = 0, t2v = 0;
  for (long i = 0; i < B; ++i) {
    long double num = 0, den = 0;
    for (long r : {i, i + B})
      for (long c = 0; c < 2 * B; ++c) {
        den += sim(r, c);
        if (positive(ents, need_both, r, c)) num += sim(r, c);
      }
    v2t -= std::log(num / den);
    num = den = 0;
    for (long c : {i, i + B})
      for (long r = 0; r < 2 * B; ++r) {
        den += sim(r, c);
        if (positive(ents, need_both, r, c)) num += sim(r, c);
      }
    t2v -= std::log(num / den);
  }
  return static_cast<double>((v2t + t2v) / B);
}

/// Exhaustive pair mining over every (ego, exo) combination.
inline std::vector<egoexo::mining::EgoPairs> mine(const std::vector<egoexo::data::ClipRecord>& ego,
                                                   const std::vector<egoexo::data::ClipRecord>& exo,
                                                   const egoexo::text::TaggerLexicon& lex, std::size_t top_k) {
  using egoexo::mining::PairCandidate;
  std::vector<egoexo::mining::EgoPairs> out;
  for (const auto& e : ego) {
    if (e.scenario.empty()) continue;
    const auto pe = egoexo::text::extract_entities(egoexo::text::normalize_caption(e.best_text()), lex);
    std::vector<PairCandidate> all;
    for (const auto& x : exo) {
      if (x.scenario != e.scenario) continue;
      const auto px = egoexo::text::extract_entities(egoexo::text::normalize_caption(x.best_text()), lex);
      std::size_t n = 0, v = 0;
      for (const auto& w : pe.nouns) n += px.nouns.count(w);
      for (const auto& w : pe.verbs) v += px.verbs.count(w);
      if (n == 0 || v == 0) continue;
      all.push_back({e.clip_id, x.clip_id, n, v, n + v});
    }
    std::sort(all.begin(), all.end(), [](const PairCandidate& a, const PairCandidate& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.noun_overlap != b.noun_overlap) return a.noun_overlap > b.noun_overlap;
      return a.exo_clip_id < b.exo_clip_id;
    });
    if (all.size() > top_k) all.resize(top_k);
    out.push_back({e.clip_id, all});
  }
  return out;
}

/// Candidate order by score descending, index ascending on ties, via
/// pairwise comparison counting.
inline std::vector<long> ranking(const Eigen::RowVectorXd& s) {
  const long n = s.size();
  std::vector<long> rank_of(static_cast<std::size_t>(n));
  for (long a = 0; a < n; ++a) {
    long before = 0;
    for (long b = 0; b < n; ++b)
      if (s(b) > s(a) || (s(b) == s(a) && b < a)) ++before;
    rank_of[static_cast<std::size_t>(a)] = before;
  }
  std::vector<long> order(static_cast<std::size_t>(n));
  for (long a = 0; a < n; ++a) order[static_cast<std::size_t>(rank_of[static_cast<std::size_t>(a)])] = a;
  return order;
}

/// AP as the mean over relevant items d of |{relevant e ranked at or above d}| / rank(d).
inline double average_precision(const Eigen::RowVectorXd& s, const Eigen::RowVectorXd& rel) {
  const auto order = ranking(s);
  std::vector<long> pos(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) pos[static_cast<std::size_t>(order[r])] = static_cast<long>(r);
  double sum = 0;
  int count = 0;
  for (long d = 0; d < s.size(); ++d) {
    if (rel(d) <= 0) continue;
    ++count;
    int above = 0;
    for (long e = 0; e < s.size(); ++e)
      if (rel(e) > 0 && pos[static_cast<std::size_t>(e)] <= pos[static_cast<std::size_t>(d)]) ++above;
    sum += static_cast<double>(above) / static_cast<double>(pos[static_cast<std::size_t>(d)] + 1);
  }
  return count ? sum / count : -1.0;
}

inline double ndcg(const Eigen::RowVectorXd& s, const Eigen::RowVectorXd& rel, bool exponential) {
  auto gain = [&](double g) { return exponential ? std::pow(2.0, g) - 1.0 : g; };
  const auto order = ranking(s);
  double dcg = 0;
  for (std::size_t r = 0; r < order.size(); ++r) dcg += gain(rel(order[r])) / std::log2(static_cast<double>(r) + 2.0);
  std::vector<double> sorted(rel.data(), rel.data() + rel.size());
  std::sort(sorted.rbegin(), sorted.rend());
  double ideal = 0;
  for (std::size_t r = 0; r < sorted.size(); ++r) ideal += gain(sorted[r]) / std::log2(static_cast<double>(r) + 2.0);
  return ideal > 0 ? dcg / ideal : -1.0;
}

/// Random EntityProfile over small noun/verb alphabets.
inline egoexo::text::EntityProfile random_profile(std::mt19937_64& rng, int nouns, int verbs) {
  egoexo::text::EntityProfile p;
  std::bernoulli_distribution take(0.3);
  for (int i = 0; i < nouns; ++i)
    if (take(rng)) p.nouns.insert("n" + std::to_string(i));
  for (int i = 0; i < verbs; ++i)
    if (take(rng)) p.verbs.insert("v" + std::to_string(i));
  return p;
}

inline Eigen::MatrixXd random_unit_rows(long rows, long cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n01;
  Eigen::MatrixXd m(rows, cols);
  for (long i = 0; i < m.size(); ++i) m.data()[i] = n01(rng);
  for (long r = 0; r < rows; ++r) m.row(r).normalize();
  return m;
}

struct RandomCorpus {
  std::vector<egoexo::data::ClipRecord> ego, exo;
  egoexo::text::TaggerLexicon lexicon;
};

/// Up to `max_clips` clips over three scenarios and a `lemmas`-lemma
/// vocabulary (half nouns, half verbs, each with an inflected surface form).
/// Small vocabularies make equal scores common, which exercises tie-breaks.
inline RandomCorpus random_corpus(std::mt19937_64& rng, int max_clips = 200, int lemmas = 40) {
  RandomCorpus c;
  std::vector<std::string> surfaces;
  for (int i = 0; i < lemmas; ++i) {
    const bool noun = i % 2 == 0;
    const auto lemma = (noun ? "n" : "v") + std::to_string(i);
    const auto pos = noun ? egoexo::text::PartOfSpeech::noun : egoexo::text::PartOfSpeech::verb;
    c.lexicon.add(lemma, lemma, pos);
    c.lexicon.add(lemma + (noun ? "s" : "ing"), lemma, pos);
    surfaces.push_back(lemma);
    surfaces.push_back(lemma + (noun ? "s" : "ing"));
  }
  c.lexicon.add_stopword("the");
  surfaces.push_back("the");
  surfaces.push_back("blah");
  surfaces.push_back("#C");

  std::uniform_int_distribution<int> n_clips(2, max_clips);
  std::uniform_int_distribution<std::size_t> word(0, surfaces.size() - 1);
  std::uniform_int_distribution<int> length(0, 5);
  std::uniform_int_distribution<int> scen(0, 2);
  std::bernoulli_distribution coin(0.5), rare(0.08);
  auto text = [&] {
    std::string t;
    for (int k = length(rng); k > 0; --k) t += surfaces[word(rng)] + " ";
    return t;
  };
  const int total = n_clips(rng);
  for (int i = 0; i < total; ++i) {
    egoexo::data::ClipRecord r;
    const bool ego = coin(rng);
    r.clip_id = (ego ? "e" : "x") + std::to_string((i * 7919) % 1000);
    r.clip_id += "_" + std::to_string(i);
    r.video_id = "vid" + std::to_string(i % 5);
    r.view = ego ? egoexo::data::ViewLabel::ego : egoexo::data::ViewLabel::exo;
    r.scenario = "s" + std::to_string(scen(rng));
    if (ego && rare(rng)) r.scenario.clear();
    r.start_s = i;
    r.end_s = i + 1;
    r.raw_text = text();
    if (!ego && coin(rng)) r.refined_text = text();
    (ego ? c.ego : c.exo).push_back(std::move(r));
  }
  return c;
}

}  // namespace oracle
