#include "egoexo/data/types.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_set>

#include "egoexo/errors.hpp"

namespace egoexo::data {

std::string_view to_string(ViewLabel view) { return view == ViewLabel::ego ? "ego" : "exo"; }

ViewLabel parse_view(std::string_view text) {
  if (text == "ego") return ViewLabel::ego;
  if (text == "exo") return ViewLabel::exo;
  throw ValidationError("bad view \"" + std::string(text) + "\" (expected ego or exo)");
}

void validate_record(const ClipRecord& record) {
  if (record.clip_id.empty()) throw ValidationError("empty clip_id");
  if (!std::isfinite(record.start_s) || !std::isfinite(record.end_s))
    throw ValidationError("clip " + record.clip_id + ": non-finite time span");
  if (record.start_s < 0.0) throw ValidationError("clip " + record.clip_id + ": start < 0");
  if (!(record.end_s > record.start_s))
    throw ValidationError("clip " + record.clip_id + ": end must be greater than start");
}

void validate_manifest(const DatasetManifest& manifest) {
  std::unordered_set<std::string> seen;
  for (const auto& r : manifest.records) {
    validate_record(r);
    if (r.view != manifest.view)
      throw ValidationError("clip " + r.clip_id + " has view " + std::string(to_string(r.view)) +
                            " in a " + std::string(to_string(manifest.view)) + " manifest");
    if (!seen.insert(r.clip_id).second) throw ValidationError("duplicate clip_id " + r.clip_id);
  }
}

std::vector<TranscriptDocument> group_transcripts(const std::vector<ClipRecord>& records,
                                                  bool use_refined) {
  std::vector<TranscriptDocument> docs;
  std::map<std::string, std::size_t> slot;
  for (const auto& r : records) {
    auto [it, inserted] = slot.try_emplace(r.video_id, docs.size());
    if (inserted) docs.push_back({r.video_id, {}});
    docs[it->second].narrations.push_back(
        {use_refined ? r.best_text() : r.raw_text, r.start_s, r.end_s});
  }
  for (auto& d : docs) {
    std::stable_sort(d.narrations.begin(), d.narrations.end(),
                     [](const Narration& a, const Narration& b) { return a.start_s < b.start_s; });
  }
  return docs;
}

}  // namespace egoexo::data
