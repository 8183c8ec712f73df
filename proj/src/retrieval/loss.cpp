#include "egoexo/retrieval/loss.hpp"

#include <algorithm>
#include <cmath>

#include "egoexo/errors.hpp"

namespace egoexo::retrieval {
namespace {

bool intersects(const std::set<std::string>& a, const std::set<std::string>& b) {
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      return true;
    }
  }
  return false;
}

bool entity_match(const text::EntityProfile& a, const text::EntityProfile& b, EntityRule rule) {
  const bool n = intersects(a.nouns, b.nouns);
  const bool v = intersects(a.verbs, b.verbs);
  return rule == EntityRule::both ? (n && v) : (n || v);
}

void require_finite(const nn::Matrix& m, const char* name) {
  if (!m.allFinite()) throw NumericError(std::string("EgoExoNCE: non-finite values in ") + name);
}

}  // namespace

EntityRule parse_entity_rule(std::string_view text) {
  if (text == "and") return EntityRule::both;
  if (text == "or") return EntityRule::either;
  throw ValidationError("entity_rule must be \"and\" or \"or\", got \"" + std::string(text) + "\"");
}

std::string_view to_string(EntityRule rule) { return rule == EntityRule::both ? "and" : "or"; }

void LossConfig::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw ValidationError("temperature must be positive");
}

PositiveMask build_positive_mask(std::span<const SampleEntities> batch, const LossConfig& cfg) {
  const auto b = static_cast<Eigen::Index>(batch.size());
  PositiveMask mask;
  mask.batch = b;
  mask.positive.setConstant(2 * b, 2 * b, false);
  for (Eigen::Index i = 0; i < b; ++i) {
    for (Eigen::Index j = 0; j < b; ++j) {
      const auto& si = batch[static_cast<std::size_t>(i)];
      const auto& sj = batch[static_cast<std::size_t>(j)];
      const bool ego_col = i == j || entity_match(si.ego, sj.ego, cfg.entity_rule);
      const bool exo_col = i == j || entity_match(si.exo, sj.exo, cfg.entity_rule);
      for (auto row : {i, i + b}) {
        mask.positive(row, j) = ego_col;
        mask.positive(row, j + b) = exo_col;
      }
    }
  }
  return mask;
}

LossTerms egoexo_nce(const nn::Matrix& ego_video, const nn::Matrix& exo_video,
                     const nn::Matrix& ego_text, const nn::Matrix& exo_text,
                     const PositiveMask& mask, const LossConfig& cfg) {
  cfg.validate();
  const auto b = ego_video.rows();
  const auto d = ego_video.cols();
  if (b == 0) throw ShapeError("EgoExoNCE: empty batch");
  for (const auto* m : {&exo_video, &ego_text, &exo_text})
    if (m->rows() != b || m->cols() != d) throw ShapeError("EgoExoNCE: embedding shapes differ");
  if (mask.batch != b || mask.positive.rows() != 2 * b || mask.positive.cols() != 2 * b)
    throw ShapeError("EgoExoNCE: mask does not match batch");
  require_finite(ego_video, "ego video");
  require_finite(exo_video, "exo video");
  require_finite(ego_text, "ego text");
  require_finite(exo_text, "exo text");

  nn::Matrix videos(2 * b, d), texts(2 * b, d);
  videos << ego_video, exo_video;
  texts << ego_text, exo_text;
  const double inv_tau = 1.0 / cfg.temperature;
  const nn::Matrix s = videos * texts.transpose() * inv_tau;
  nn::Matrix ds = nn::Matrix::Zero(2 * b, 2 * b);
  const double inv_b = 1.0 / static_cast<double>(b);

  LossTerms out;
  for (Eigen::Index i = 0; i < b; ++i) {
    const Eigen::Index rows[2] = {i, i + b};

    // Video anchors i (ego) and i+B (exo) against all 2B texts.
    double mx = -INFINITY;
    for (auto r : rows) mx = std::max(mx, s.row(r).maxCoeff());
    double num = 0.0, den = 0.0;
    for (auto r : rows)
      for (Eigen::Index j = 0; j < 2 * b; ++j) {
        const double e = std::exp(s(r, j) - mx);
        den += e;
        if (mask(r, j)) num += e;
      }
    out.v2t += (std::log(den) - std::log(num)) * inv_b;
    for (auto r : rows)
      for (Eigen::Index j = 0; j < 2 * b; ++j) {
        const double e = std::exp(s(r, j) - mx);
        ds(r, j) += inv_b * (e / den - (mask(r, j) ? e / num : 0.0));
      }

    // Text anchors i (ego) and i+B (exo) against all 2B videos.
    mx = -INFINITY;
    for (auto c : rows) mx = std::max(mx, s.col(c).maxCoeff());
    num = 0.0;
    den = 0.0;
    for (auto c : rows)
      for (Eigen::Index r = 0; r < 2 * b; ++r) {
        const double e = std::exp(s(r, c) - mx);
        den += e;
        if (mask(r, c)) num += e;
      }
    out.t2v += (std::log(den) - std::log(num)) * inv_b;
    for (auto c : rows)
      for (Eigen::Index r = 0; r < 2 * b; ++r) {
        const double e = std::exp(s(r, c) - mx);
        ds(r, c) += inv_b * (e / den - (mask(r, c) ? e / num : 0.0));
      }
  }
  out.total = out.v2t + out.t2v;
  if (!std::isfinite(out.total)) throw NumericError("EgoExoNCE: loss is not finite");

  const nn::Matrix dv = ds * texts * inv_tau;
  const nn::Matrix du = ds.transpose() * videos * inv_tau;
  out.d_ego_video = dv.topRows(b);
  out.d_exo_video = dv.bottomRows(b);
  out.d_ego_text = du.topRows(b);
  out.d_exo_text = du.bottomRows(b);
  return out;
}

nn::Var egoexo_nce_loss(const nn::Var& ego_video, const nn::Var& exo_video,
                        const nn::Var& ego_text, const nn::Var& exo_text,
                        const PositiveMask& mask, const LossConfig& cfg, LossTerms* terms) {
  auto t = egoexo_nce(ego_video.value(), exo_video.value(), ego_text.value(), exo_text.value(), mask, cfg);
  auto node = nn::scalar_with_gradients(t.total, {ego_video, exo_video, ego_text, exo_text},
                                        {t.d_ego_video, t.d_exo_video, t.d_ego_text, t.d_exo_text});
  if (terms) *terms = std::move(t);
  return node;
}

}  // namespace egoexo::retrieval
