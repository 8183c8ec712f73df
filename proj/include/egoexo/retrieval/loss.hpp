#pragma once

#include <span>
#include <string>

#include "egoexo/nn/autograd.hpp"
#include "egoexo/text/lexicon.hpp"

namespace egoexo::retrieval {

enum class EntityRule { both, either };

EntityRule parse_entity_rule(std::string_view text);  // "and" | "or"
std::string_view to_string(EntityRule rule);

struct LossConfig {
  double temperature = 0.05;
  EntityRule entity_rule = EntityRule::both;

  void validate() const;
};

struct SampleEntities {
  text::EntityProfile ego;
  text::EntityProfile exo;
};

/// 2B x 2B positives. Rows are video anchors [ego_1..ego_B, exo_1..exo_B],
/// columns texts in the same order.
struct PositiveMask {
  Eigen::Index batch = 0;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> positive;

  bool operator()(Eigen::Index row, Eigen::Index col) const { return positive(row, col); }
};

/// Text column j of view c is positive for sample i when j == i, or when the
/// view-c texts of i and j share a noun and a verb (entity_rule both) or a
/// noun or a verb (either). The anchor view does not matter, so rows i and
/// i + B coincide.
PositiveMask build_positive_mask(std::span<const SampleEntities> batch, const LossConfig& cfg);

struct LossTerms {
  double total = 0.0;
  double v2t = 0.0;
  double t2v = 0.0;
  nn::Matrix d_ego_video, d_exo_video, d_ego_text, d_exo_text;
};

/// EgoExoNCE value and its analytic gradient. Inputs are B x d embeddings.
///
/// Video to text, per sample i with anchors ego_i and exo_i (rows i, i+B):
///   -log( sum_{r in {i,i+B}} sum_j M[r,j] e^{S[r,j]} / sum_{r in {i,i+B}} sum_j e^{S[r,j]} )
/// with S = V U^T / tau over all 2B texts. Text to video is the same with
/// texts i, i+B as anchors over all 2B videos and M transposed. Both terms are
/// averaged over B and summed. Throws NumericError on non-finite input.
LossTerms egoexo_nce(const nn::Matrix& ego_video, const nn::Matrix& exo_video,
                     const nn::Matrix& ego_text, const nn::Matrix& exo_text,
                     const PositiveMask& mask, const LossConfig& cfg);

/// Graph node wrapping `egoexo_nce`.
nn::Var egoexo_nce_loss(const nn::Var& ego_video, const nn::Var& exo_video,
                        const nn::Var& ego_text, const nn::Var& exo_text,
                        const PositiveMask& mask, const LossConfig& cfg, LossTerms* terms = nullptr);

}  // namespace egoexo::retrieval
