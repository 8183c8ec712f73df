#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace egoexo::metrics {

/// Value plus how many queries were scored and how many were skipped for
/// having nothing relevant.
struct MetricValue {
  double value = 0.0;
  std::size_t evaluated = 0;
  std::size_t excluded = 0;
};

/// Fraction of queries with at least one relevant id in the top k.
MetricValue recall_at_k(const std::vector<std::vector<std::string>>& rankings,
                        const std::vector<std::set<std::string>>& relevant, std::size_t k);

/// Candidates ordered by score descending, lower index first on ties.
std::vector<Eigen::Index> rank_candidates(const Eigen::RowVectorXd& scores);

/// Grades > 0 count as relevant.
MetricValue mean_average_precision(const Eigen::MatrixXd& scores, const Eigen::MatrixXd& relevance);

enum class Gain { linear, exponential };
const char* to_string(Gain g);
Gain parse_gain(const std::string& s);

/// DCG over the full list with gain/log2(rank+1), divided by the ideal DCG.
MetricValue ndcg(const Eigen::MatrixXd& scores, const Eigen::MatrixXd& relevance, Gain gain = Gain::linear);

struct CandidateGroup {
  std::string query_id;
  std::vector<std::string> candidates;  // exactly 5, distinct
  int correct = 0;
  std::string label;
};

/// query id -> candidate id -> score.
using McqScores = std::map<std::string, std::map<std::string, double>>;

struct LabelAccuracy {
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

struct McqResult {
  LabelAccuracy overall;
  std::map<std::string, LabelAccuracy> per_label;
};

/// Correct iff the correct candidate is the unique maximum; ties are wrong.
McqResult mcq_accuracy(const std::vector<CandidateGroup>& groups, const McqScores& scores);

}  // namespace egoexo::metrics
