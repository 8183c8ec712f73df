#include "egoexo/metrics/retrieval_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "egoexo/errors.hpp"

namespace egoexo::metrics {

MetricValue recall_at_k(const std::vector<std::vector<std::string>>& rankings,
                        const std::vector<std::set<std::string>>& relevant, std::size_t k) {
  if (k < 1) throw ValidationError("recall_at_k: k must be >= 1");
  if (rankings.size() != relevant.size())
    throw ValidationError("recall_at_k: rankings and relevant sets differ in length");
  MetricValue out;
  std::size_t hits = 0;
  for (std::size_t q = 0; q < rankings.size(); ++q) {
    if (relevant[q].empty()) {
      ++out.excluded;
      continue;
    }
    ++out.evaluated;
    const auto top = std::min(k, rankings[q].size());
    for (std::size_t r = 0; r < top; ++r)
      if (relevant[q].count(rankings[q][r])) {
        ++hits;
        break;
      }
  }
  if (out.evaluated) out.value = static_cast<double>(hits) / static_cast<double>(out.evaluated);
  return out;
}

std::vector<Eigen::Index> rank_candidates(const Eigen::RowVectorXd& scores) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return scores(a) > scores(b); });
  return order;
}

namespace {

void check_shapes(const Eigen::MatrixXd& scores, const Eigen::MatrixXd& rel, const char* what) {
  if (scores.rows() != rel.rows() || scores.cols() != rel.cols())
    throw ValidationError(std::string(what) + ": score and relevance shapes differ");
  if ((rel.array() < 0.0).any()) throw ValidationError(std::string(what) + ": negative relevance grade");
  if (!scores.allFinite()) throw ValidationError(std::string(what) + ": non-finite score");
}

}  // namespace

MetricValue mean_average_precision(const Eigen::MatrixXd& scores, const Eigen::MatrixXd& relevance) {
  check_shapes(scores, relevance, "mean_average_precision");
  MetricValue out;
  double total = 0.0;
  for (Eigen::Index q = 0; q < scores.rows(); ++q) {
    const auto order = rank_candidates(scores.row(q));
    std::size_t relevant = 0;
    double ap = 0.0;
    for (std::size_t r = 0; r < order.size(); ++r)
      if (relevance(q, order[r]) > 0.0) {
        ++relevant;
        ap += static_cast<double>(relevant) / static_cast<double>(r + 1);
      }
    if (!relevant) {
      ++out.excluded;
      continue;
    }
    ++out.evaluated;
    total += ap / static_cast<double>(relevant);
  }
  if (out.evaluated) out.value = total / static_cast<double>(out.evaluated);
  return out;
}

const char* to_string(Gain g) { return g == Gain::linear ? "linear" : "exponential"; }

Gain parse_gain(const std::string& s) {
  if (s == "linear") return Gain::linear;
  if (s == "exponential") return Gain::exponential;
  throw ValidationError("unknown nDCG gain \"" + s + "\" (expected linear or exponential)");
}

MetricValue ndcg(const Eigen::MatrixXd& scores, const Eigen::MatrixXd& relevance, Gain gain) {
  check_shapes(scores, relevance, "ndcg");
  auto g = [gain](double rel) { return gain == Gain::linear ? rel : std::exp2(rel) - 1.0; };
  MetricValue out;
  double total = 0.0;
  for (Eigen::Index q = 0; q < scores.rows(); ++q) {
    std::vector<double> ideal(static_cast<std::size_t>(relevance.cols()));
    for (Eigen::Index c = 0; c < relevance.cols(); ++c) ideal[static_cast<std::size_t>(c)] = relevance(q, c);
    std::sort(ideal.begin(), ideal.end(), std::greater<>());
    double idcg = 0.0;
    for (std::size_t r = 0; r < ideal.size(); ++r) idcg += g(ideal[r]) / std::log2(static_cast<double>(r) + 2.0);
    if (!(idcg > 0.0)) {
      ++out.excluded;
      continue;
    }
    const auto order = rank_candidates(scores.row(q));
    double dcg = 0.0;
    for (std::size_t r = 0; r < order.size(); ++r)
      dcg += g(relevance(q, order[r])) / std::log2(static_cast<double>(r) + 2.0);
    ++out.evaluated;
    total += dcg / idcg;
  }
  if (out.evaluated) out.value = total / static_cast<double>(out.evaluated);
  return out;
}

McqResult mcq_accuracy(const std::vector<CandidateGroup>& groups, const McqScores& scores) {
  McqResult out;
  for (const auto& grp : groups) {
    if (grp.candidates.size() != 5)
      throw ValidationError("mcq group " + grp.query_id + ": expected 5 candidates, got " +
                            std::to_string(grp.candidates.size()));
    if (grp.correct < 0 || grp.correct >= 5)
      throw ValidationError("mcq group " + grp.query_id + ": correct index out of range");
    if (std::set<std::string>(grp.candidates.begin(), grp.candidates.end()).size() != 5)
      throw ValidationError("mcq group " + grp.query_id + ": candidates are not distinct");
    auto row = scores.find(grp.query_id);
    if (row == scores.end()) throw ValidationError("mcq: no scores for query " + grp.query_id);
    std::vector<double> s;
    for (const auto& c : grp.candidates) {
      auto it = row->second.find(c);
      if (it == row->second.end())
        throw ValidationError("mcq: missing score for query " + grp.query_id + " candidate " + c);
      s.push_back(it->second);
    }
    const double target = s[static_cast<std::size_t>(grp.correct)];
    bool ok = true;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (static_cast<int>(i) != grp.correct && s[i] >= target) ok = false;
    auto& label = out.per_label[grp.label];
    ++label.total;
    ++out.overall.total;
    if (ok) {
      ++label.correct;
      ++out.overall.correct;
    }
  }
  return out;
}

}  // namespace egoexo::metrics
