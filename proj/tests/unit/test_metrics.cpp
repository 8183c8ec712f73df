#include <doctest.h>

#include <cmath>
#include <random>

#include "egoexo/errors.hpp"
#include "egoexo/metrics/caption_metrics.hpp"
#include "egoexo/metrics/report.hpp"
#include "egoexo/metrics/retrieval_metrics.hpp"
#include "support/oracles.hpp"

using namespace egoexo;
using namespace egoexo::metrics;

namespace {

Eigen::MatrixXd random_scores(std::mt19937_64& rng, long q, long c) {
  // coarse values so ties are frequent
  std::uniform_int_distribution<int> u(0, 4);
  Eigen::MatrixXd m(q, c);
  for (long i = 0; i < m.size(); ++i) m.data()[i] = u(rng) * 0.25;
  return m;
}

Eigen::MatrixXd random_relevance(std::mt19937_64& rng, long q, long c) {
  std::uniform_int_distribution<int> u(0, 6);
  Eigen::MatrixXd m(q, c);
  for (long i = 0; i < m.size(); ++i) {
    const int v = u(rng);
    m.data()[i] = v > 3 ? v - 3 : 0;
  }
  return m;
}

}  // namespace

TEST_CASE("recall at k on hand-built rankings") {
  const std::vector<std::vector<std::string>> rankings = {
      {"a", "b", "c"}, {"b", "a", "c"}, {"c", "b", "a"}, {"a", "c", "b"}, {"a", "b", "c"}};
  const std::vector<std::set<std::string>> relevant = {{"a"}, {"a"}, {"a"}, {"b", "c"}, {}};
  const auto r1 = recall_at_k(rankings, relevant, 1);
  CHECK(r1.value == 0.25);
  CHECK(r1.evaluated == 4);
  CHECK(r1.excluded == 1);
  CHECK(recall_at_k(rankings, relevant, 2).value == 0.75);
  CHECK(recall_at_k(rankings, relevant, 3).value == 1.0);
  CHECK_THROWS_AS(recall_at_k(rankings, relevant, 0), ValidationError);

  const std::vector<std::vector<std::string>> top = {{"x"}, {"y"}};
  CHECK(recall_at_k(top, {{"x"}, {"y", "z"}}, 1).value == 1.0);
}

TEST_CASE("average precision, trivial and degenerate") {
  Eigen::MatrixXd s(2, 3), rel(2, 3);
  s << 0.9, 0.5, 0.1, 0.3, 0.2, 0.1;
  rel << 1, 0, 0, 0, 0, 0;
  const auto m = mean_average_precision(s, rel);
  CHECK(m.value == 1.0);
  CHECK(m.evaluated == 1);
  CHECK(m.excluded == 1);
}

TEST_CASE("ndcg by hand") {
  Eigen::MatrixXd ideal(1, 3), rel(1, 3), s(1, 3);
  rel << 3, 2, 0;
  ideal << 3, 2, 1;
  CHECK(ndcg(ideal, rel).value == 1.0);
  // presented order: relevance 2, then 3, then 0
  s << 0.5, 0.9, 0.1;
  const double dcg = 2.0 + 3.0 / std::log2(3.0);
  const double idcg = 3.0 + 2.0 / std::log2(3.0);
  CHECK(std::abs(ndcg(s, rel).value - dcg / idcg) <= 1e-12);
  const double dcg_exp = 3.0 + 7.0 / std::log2(3.0);
  const double idcg_exp = 7.0 + 3.0 / std::log2(3.0);
  CHECK(std::abs(ndcg(s, rel, Gain::exponential).value - dcg_exp / idcg_exp) <= 1e-12);
  CHECK(parse_gain("exponential") == Gain::exponential);
  CHECK_THROWS_AS(parse_gain("log"), ValidationError);
}

TEST_CASE("rank metrics equal definition oracles on random instances") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 500; ++trial) {
    const long q = 1 + trial % 10, c = 1 + (trial / 10) % 10;
    const auto s = random_scores(rng, q, c);
    const auto rel = random_relevance(rng, q, c);

    double ap_sum = 0, nd_sum = 0, nde_sum = 0;
    int ap_n = 0, nd_n = 0;
    std::vector<std::vector<std::string>> rankings;
    std::vector<std::set<std::string>> relevant;
    for (long i = 0; i < q; ++i) {
      const Eigen::RowVectorXd srow = s.row(i), rrow = rel.row(i);
      const double ap = oracle::average_precision(srow, rrow);
      if (ap >= 0) {
        ap_sum += ap;
        ++ap_n;
      }
      const double nd = oracle::ndcg(srow, rrow, false);
      if (nd >= 0) {
        nd_sum += nd;
        nde_sum += oracle::ndcg(srow, rrow, true);
        ++nd_n;
      }
      const auto order = oracle::ranking(srow);
      CHECK(rank_candidates(srow) == std::vector<Eigen::Index>(order.begin(), order.end()));
      std::vector<std::string> ids;
      std::set<std::string> rset;
      for (long j : order) ids.push_back("c" + std::to_string(j));
      for (long j = 0; j < c; ++j)
        if (rrow(j) > 0) rset.insert("c" + std::to_string(j));
      rankings.push_back(ids);
      relevant.push_back(rset);
    }
    const auto map = mean_average_precision(s, rel);
    CHECK(map.evaluated == static_cast<std::size_t>(ap_n));
    CHECK(map.excluded == static_cast<std::size_t>(q - ap_n));
    if (ap_n) CHECK(std::abs(map.value - ap_sum / ap_n) <= 1e-9);
    const auto nd = ndcg(s, rel);
    CHECK(nd.evaluated == static_cast<std::size_t>(nd_n));
    if (nd_n) {
      CHECK(std::abs(nd.value - nd_sum / nd_n) <= 1e-9);
      CHECK(std::abs(ndcg(s, rel, Gain::exponential).value - nde_sum / nd_n) <= 1e-9);
    }

    double prev = 0;
    for (std::size_t k = 1; k <= static_cast<std::size_t>(c); ++k) {
      int hits = 0, n = 0;
      for (long i = 0; i < q; ++i) {
        if (relevant[i].empty()) continue;
        ++n;
        for (std::size_t r = 0; r < k; ++r)
          if (relevant[i].count(rankings[i][r])) {
            ++hits;
            break;
          }
      }
      const auto rk = recall_at_k(rankings, relevant, k);
      if (n) CHECK(std::abs(rk.value - static_cast<double>(hits) / n) <= 1e-12);
      CHECK(rk.value >= prev);
      CHECK(rk.value <= 1.0);
      prev = rk.value;
    }

    // positive monotone transform of the scores
    const Eigen::MatrixXd t = (s.array() * 3.0).exp() + 1.0;
    CHECK(mean_average_precision(t, rel).value == map.value);
    CHECK(ndcg(t, rel).value == nd.value);
    CHECK(map.value >= 0.0);
    CHECK(map.value <= 1.0);
    CHECK(nd.value >= 0.0);
    CHECK(nd.value <= 1.0 + 1e-12);
  }
}

TEST_CASE("multiple choice accuracy by label") {
  auto group = [](std::string q, int correct, std::string label) {
    return CandidateGroup{q, {"p", "q", "r", "s", "t"}, correct, label};
  };
  const std::vector<CandidateGroup> groups = {group("g1", 0, "inter"), group("g2", 1, "inter"), group("g3", 2, "inter"),
                                              group("g4", 3, "intra"), group("g5", 4, "intra"), group("g6", 0, "intra")};
  auto row = [](std::vector<double> v) {
    std::map<std::string, double> m;
    const char* ids[] = {"p", "q", "r", "s", "t"};
    for (int i = 0; i < 5; ++i) m[ids[i]] = v[static_cast<std::size_t>(i)];
    return m;
  };
  McqScores scores;
  scores["g1"] = row({5, 1, 1, 1, 1});  // right
  scores["g2"] = row({0, 2, 1, 1, 1});  // right
  scores["g3"] = row({3, 1, 2, 0, 0});  // wrong
  scores["g4"] = row({0, 0, 0, 1, 0});  // right
  scores["g5"] = row({0, 0, 0, 1, 1});  // tie at the top: wrong
  scores["g6"] = row({1, 2, 0, 0, 0});  // wrong
  const auto r = mcq_accuracy(groups, scores);
  CHECK(r.overall.correct == 3);
  CHECK(r.overall.total == 6);
  CHECK(r.per_label.at("inter").correct == 2);
  CHECK(r.per_label.at("intra").correct == 1);
  CHECK(r.per_label.at("intra").accuracy() == doctest::Approx(1.0 / 3.0));

  auto missing = scores;
  missing["g2"].erase("t");
  CHECK_THROWS_AS(mcq_accuracy(groups, missing), ValidationError);
  auto four = groups;
  four[0].candidates.pop_back();
  CHECK_THROWS_AS(mcq_accuracy(four, scores), ValidationError);
  auto dup = groups;
  dup[0].candidates[1] = "p";
  CHECK_THROWS_AS(mcq_accuracy(dup, scores), ValidationError);
  auto bad_index = groups;
  bad_index[0].correct = 5;
  CHECK_THROWS_AS(mcq_accuracy(bad_index, scores), ValidationError);
}

TEST_CASE("multiple choice accuracy equals its oracle on random instances") {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> u(0, 3), c5(0, 4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<CandidateGroup> groups;
    McqScores scores;
    std::size_t want = 0;
    const int n = 1 + trial % 10;
    for (int g = 0; g < n; ++g) {
      CandidateGroup grp{"q" + std::to_string(g), {}, c5(rng), g % 2 ? "inter" : "intra"};
      std::vector<double> v;
      for (int k = 0; k < 5; ++k) {
        grp.candidates.push_back("k" + std::to_string(k));
        v.push_back(u(rng));
        scores[grp.query_id][grp.candidates.back()] = v.back();
      }
      bool ok = true;
      for (int k = 0; k < 5; ++k)
        if (k != grp.correct && v[static_cast<std::size_t>(k)] >= v[static_cast<std::size_t>(grp.correct)]) ok = false;
      want += ok;
      groups.push_back(grp);
    }
    const auto r = mcq_accuracy(groups, scores);
    CHECK(r.overall.correct == want);
    CHECK(r.overall.total == static_cast<std::size_t>(n));
  }
}

TEST_CASE("caption tokens") {
  CHECK(caption_tokens("The person, cuts THE onion.") ==
        std::vector<std::string>{"the", "person", "cuts", "the", "onion"});
  CHECK(ngram_counts({"a", "b", "a", "b"}, 2).at({"a", "b"}) == 2);
}

TEST_CASE("bleu hand checks") {
  CHECK(bleu4({{"the person cuts the onion", {"the person cuts the onion"}},
               {"a dog runs in the park", {"a dog runs in the park"}}}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(bleu4({{"a b c d", {"d c b a"}}}) == 0.0);

  // p1..p4 = 8/9, 5/7, 3/5, 1/3; c = 9, r = 10
  const double want = std::exp(1.0 - 10.0 / 9.0) * std::pow(8.0 / 9 * 5.0 / 7 * 3.0 / 5 * 1.0 / 3, 0.25);
  const double got = bleu4({{"the cat sat on the mat", {"the cat sat on a mat"}}, {"a dog runs", {"a dog runs fast"}}});
  CHECK(std::abs(got - want) <= 1e-12);

  // closest reference length wins, shorter on ties: c = 4, refs 6 and 2 give r = 2
  CHECK(bleu4({{"w x y z", {"w x y z a b", "w x"}}}) == 1.0);
  // a longer reference alone: c = 4, r = 8, all precisions 1
  CHECK(std::abs(bleu4({{"w x y z", {"w x y z q r s t"}}}) - std::exp(-1.0)) <= 1e-12);
}

TEST_CASE("rouge-l hand checks") {
  CHECK(rouge_l({{"a b c", {"a b c"}}}) == 1.0);
  CHECK(rouge_l({{"a b c", {"d e"}}}) == 0.0);
  CHECK(std::abs(rouge_l({{"a b c", {"a c"}}}) - 0.8) <= 1e-12);
  CHECK(lcs_length({"a", "x", "b", "c"}, {"a", "b", "y", "c"}) == 3);
  // best reference counts; mean over pairs
  CHECK(std::abs(rouge_l({{"a b c", {"d", "a c"}}, {"x", {"x"}}}) - 0.9) <= 1e-12);
}

TEST_CASE("cider hand checks") {
  // identical references everywhere: every idf is zero
  CHECK(cider({{"a man rides", {"a man rides"}}, {"a dog barks", {"a man rides"}}, {"x", {"a man rides"}}}) == 0.0);

  // disjoint vocabularies, idf = log 2 for everything seen
  // pair 1: n=1 cos 3/sqrt(10), n=2 cos 1/sqrt(2), n=3,4 nothing in the reference
  // pair 2: n=1,2 cos 1, n=3,4 empty
  const double p1 = 10.0 * (3.0 / std::sqrt(10.0) + 1.0 / std::sqrt(2.0)) / 4.0;
  const double p2 = 10.0 * 2.0 / 4.0;
  CHECK(std::abs(cider({{"a b b", {"a b"}}, {"c d", {"c d"}}}) - (p1 + p2) / 2.0) <= 1e-12);

  // empty hypothesis scores zero for its pair
  CHECK(std::abs(cider({{"", {"a b"}}, {"c d", {"c d"}}}) - 2.5) <= 1e-12);

  CHECK_THROWS_AS(cider({{"a", {"a"}}}), ValidationError);
  CHECK_THROWS_AS(cider({{"a", {}}, {"b", {"b"}}}), ValidationError);
}

TEST_CASE("property: caption metrics stay in range") {
  std::mt19937_64 rng(5);
  const std::vector<std::string> words = {"a", "b", "c", "d", "e"};
  std::uniform_int_distribution<std::size_t> w(0, words.size() - 1);
  std::uniform_int_distribution<int> len(0, 6);
  auto sentence = [&] {
    std::string s;
    for (int i = len(rng); i > 0; --i) s += words[w(rng)] + " ";
    return s;
  };
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<CaptionPair> corpus;
    for (int i = 0; i < 2 + trial % 5; ++i) corpus.push_back({sentence(), {sentence(), sentence()}});
    const double b = bleu4(corpus), r = rouge_l(corpus), c = cider(corpus);
    CHECK(b >= 0.0);
    CHECK(b <= 1.0 + 1e-12);
    CHECK(r >= 0.0);
    CHECK(r <= 1.0);
    CHECK(c >= 0.0);
  }
}

TEST_CASE("evaluation report lists values, counts and switches") {
  EvaluationReport rep;
  rep.task = "retrieval";
  rep.add("R@1", 0.5, 4, 1);
  rep.switches = {{"gain", "linear"}};
  rep.unavailable.push_back("METEOR");
  const auto j = rep.to_json();
  CHECK(j.at("metrics").at(0).at("metric") == "R@1");
  CHECK(j.at("metrics").at(0).at("excluded") == 1);
  CHECK(j.at("switches").at("gain") == "linear");
  const auto text = rep.to_text();
  CHECK(text.find("0.500000 evaluated=4 excluded=1") != std::string::npos);
  CHECK(text.find("METEOR unavailable") != std::string::npos);
}
