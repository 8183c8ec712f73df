#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "egoexo/data/types.hpp"
#include "egoexo/text/lexicon.hpp"
#include "egoexo/text/refiner.hpp"

namespace egoexo::mining {

struct MiningConfig {
  double alpha_s = 1.0;
  std::size_t top_k = 1;
  double longform_min_s = 60.0;
  double longform_max_s = 300.0;
  std::size_t narrations_per_window = 20;
  std::size_t threads = 1;

  void validate() const;
};

/// Per-scenario inverted index from noun/verb lemmas to exo clip ids.
class EntityIndex {
 public:
  using Postings = std::map<std::string, std::set<std::string>>;
  struct ScenarioPostings {
    Postings nouns;
    Postings verbs;
  };

  void add(const std::string& clip_id, const std::string& scenario, text::EntityProfile profile);

  const ScenarioPostings* scenario(const std::string& name) const;
  const text::EntityProfile* profile(const std::string& clip_id) const;
  const std::map<std::string, text::EntityProfile>& profiles() const { return profiles_; }
  const std::map<std::string, std::string>& scenarios_by_clip() const { return scenario_of_; }
  std::size_t size() const { return profiles_.size(); }
  bool empty() const { return profiles_.empty(); }

 private:
  std::map<std::string, ScenarioPostings> by_scenario_;
  std::map<std::string, text::EntityProfile> profiles_;
  std::map<std::string, std::string> scenario_of_;
};

/// Indexes exo clips by the entities of their refined (else raw) caption
/// after normalization. Throws ValidationError for an ego record.
EntityIndex build_entity_index(const std::vector<data::ClipRecord>& exo_records,
                               const text::TaggerLexicon& lexicon);

struct PairCandidate {
  std::string ego_clip_id;
  std::string exo_clip_id;
  std::size_t noun_overlap = 0;
  std::size_t verb_overlap = 0;
  std::size_t score = 0;

  bool operator==(const PairCandidate&) const = default;
};

struct EgoPairs {
  std::string ego_clip_id;
  std::vector<PairCandidate> candidates;  // ranked, at most top_k

  bool operator==(const EgoPairs&) const = default;
};

struct MiningResult {
  std::vector<EgoPairs> pairs;       // input order, skipped clips omitted
  std::size_t skipped_no_scenario = 0;
};

/// |noun intersection| + |verb intersection|, or 0 unless both are non-empty.
/// Symmetric in its arguments.
std::size_t overlap_score(const text::EntityProfile& a, const text::EntityProfile& b);

/// True when `a` should rank above `b`: score desc, noun overlap desc, exo id asc.
bool ranks_before(const PairCandidate& a, const PairCandidate& b);

/// Ranks same-scenario exo clips for every ego clip by entity overlap.
MiningResult mine_pairs(const std::vector<data::ClipRecord>& ego_records, const EntityIndex& index,
                        const text::TaggerLexicon& lexicon, const MiningConfig& cfg);

/// [s - alpha, e + alpha] clamped to the video bounds.
std::pair<double, double> extend_boundaries(const data::ClipRecord& record, double alpha_s,
                                            double video_start_s, double video_end_s);

/// Non-overlapping windows of `narrations_per_window` consecutive narrations
/// whose span lies within [longform_min_s, longform_max_s]; each becomes one
/// clip whose text summarizes the window. Ids are "<video_id>#lf<window>".
std::vector<data::ClipRecord> build_longform_clips(const data::TranscriptDocument& doc,
                                                   const MiningConfig& cfg,
                                                   const text::Refiner& backend,
                                                   data::ViewLabel view,
                                                   const std::string& scenario);

// Pairs file: one JSON object per ego clip,
// {"ego_clip_id", "exo_clip_ids", "noun_overlaps", "verb_overlaps"}.
std::string serialize_pairs(const std::vector<EgoPairs>& pairs);
std::vector<EgoPairs> parse_pairs(const std::string& text, const std::string& source = "<memory>");
void save_pairs(const std::vector<EgoPairs>& pairs, const std::filesystem::path& path);
std::vector<EgoPairs> load_pairs(const std::filesystem::path& path);

}  // namespace egoexo::mining
