#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "egoexo/nn/autograd.hpp"

namespace egoexo::retrieval {

inline constexpr char kIndexMagic[4] = {'C', 'V', 'I', 'X'};
inline constexpr std::uint32_t kIndexVersion = 1;

/// Exo candidates with unit video and text embeddings. Immutable once built.
struct RetrievalIndex {
  std::vector<std::string> clip_ids;
  nn::Matrix video;  // n x d
  nn::Matrix text;   // n x d
  double temperature = 0.05;

  std::size_t size() const { return clip_ids.size(); }
  void validate() const;
};

enum class ScoreMode { exp_similarity, cosine };

ScoreMode parse_score_mode(std::string_view text);  // "exp" | "cosine"
std::string_view to_string(ScoreMode mode);

/// exp mode: 0.5 * (exp(q.v/tau) + exp(q.t/tau)); cosine mode: 0.5 * (q.v + q.t).
double averaged_similarity(const Eigen::VectorXd& query, const RetrievalIndex& index,
                           std::size_t row, ScoreMode mode);

/// Exact scoring over every candidate, descending score, ties by clip id.
std::vector<std::pair<std::string, double>> retrieve_topk(const Eigen::VectorXd& query,
                                                          const RetrievalIndex& index,
                                                          std::size_t k,
                                                          ScoreMode mode = ScoreMode::exp_similarity);

/// Layout (little-endian): magic "CVIX", version u32, count u64, dim u32,
/// temperature f64, count x (id_len u16, id bytes), video then text matrix as
/// count*dim float32 each, row-major.
std::vector<std::uint8_t> encode_index(const RetrievalIndex& index);
RetrievalIndex decode_index(std::span<const std::uint8_t> bytes);
void save_index(const RetrievalIndex& index, const std::filesystem::path& path);
RetrievalIndex load_index(const std::filesystem::path& path);

}  // namespace egoexo::retrieval
