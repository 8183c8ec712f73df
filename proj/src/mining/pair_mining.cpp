#include "egoexo/mining/pair_mining.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <json.hpp>

#include "egoexo/errors.hpp"
#include "egoexo/io.hpp"
#include "egoexo/text/normalize.hpp"

namespace egoexo::mining {

void MiningConfig::validate() const {
  if (!(alpha_s >= 0.0)) throw ValidationError("alpha_s must be >= 0");
  if (top_k == 0) throw ValidationError("top_k must be positive");
  if (!(longform_min_s < longform_max_s))
    throw ValidationError("longform_min_s must be less than longform_max_s");
  if (narrations_per_window == 0) throw ValidationError("narrations_per_window must be positive");
}

void EntityIndex::add(const std::string& clip_id, const std::string& scenario,
                      text::EntityProfile profile) {
  if (profiles_.count(clip_id)) throw ValidationError("clip " + clip_id + " indexed twice");
  if (!scenario.empty()) {
    auto& postings = by_scenario_[scenario];
    for (const auto& n : profile.nouns) postings.nouns[n].insert(clip_id);
    for (const auto& v : profile.verbs) postings.verbs[v].insert(clip_id);
  }
  scenario_of_[clip_id] = scenario;
  profiles_.emplace(clip_id, std::move(profile));
}

const EntityIndex::ScenarioPostings* EntityIndex::scenario(const std::string& name) const {
  auto it = by_scenario_.find(name);
  return it == by_scenario_.end() ? nullptr : &it->second;
}

const text::EntityProfile* EntityIndex::profile(const std::string& clip_id) const {
  auto it = profiles_.find(clip_id);
  return it == profiles_.end() ? nullptr : &it->second;
}

EntityIndex build_entity_index(const std::vector<data::ClipRecord>& exo_records,
                               const text::TaggerLexicon& lexicon) {
  EntityIndex index;
  for (const auto& r : exo_records) {
    if (r.view != data::ViewLabel::exo)
      throw ValidationError("clip " + r.clip_id + " is ego view; the entity index holds exo clips");
    index.add(r.clip_id, r.scenario,
              text::extract_entities(text::normalize_caption(r.best_text()), lexicon));
  }
  return index;
}

namespace {

std::size_t intersection_size(const std::set<std::string>& a, const std::set<std::string>& b) {
  std::size_t n = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++n;
      ++ia;
      ++ib;
    }
  }
  return n;
}

EgoPairs rank_one(const data::ClipRecord& ego, const EntityIndex::ScenarioPostings* postings,
                  const text::TaggerLexicon& lexicon, std::size_t top_k) {
  EgoPairs result{ego.clip_id, {}};
  if (!postings) return result;
  const auto profile = text::extract_entities(text::normalize_caption(ego.best_text()), lexicon);

  std::unordered_map<std::string, std::pair<std::size_t, std::size_t>> counts;
  for (const auto& n : profile.nouns) {
    auto it = postings->nouns.find(n);
    if (it == postings->nouns.end()) continue;
    for (const auto& id : it->second) ++counts[id].first;
  }
  for (const auto& v : profile.verbs) {
    auto it = postings->verbs.find(v);
    if (it == postings->verbs.end()) continue;
    for (const auto& id : it->second) {
      auto c = counts.find(id);
      if (c != counts.end()) ++c->second.second;  // needs a noun hit already
    }
  }

  std::vector<PairCandidate> cands;
  for (const auto& [id, nv] : counts) {
    if (nv.first == 0 || nv.second == 0) continue;
    cands.push_back({ego.clip_id, id, nv.first, nv.second, nv.first + nv.second});
  }
  const auto keep = std::min(top_k, cands.size());
  std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                    ranks_before);
  cands.resize(keep);
  result.candidates = std::move(cands);
  return result;
}

}  // namespace

std::size_t overlap_score(const text::EntityProfile& a, const text::EntityProfile& b) {
  const auto n = intersection_size(a.nouns, b.nouns);
  const auto v = intersection_size(a.verbs, b.verbs);
  return (n == 0 || v == 0) ? 0 : n + v;
}

bool ranks_before(const PairCandidate& a, const PairCandidate& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.noun_overlap != b.noun_overlap) return a.noun_overlap > b.noun_overlap;
  return a.exo_clip_id < b.exo_clip_id;
}

MiningResult mine_pairs(const std::vector<data::ClipRecord>& ego_records, const EntityIndex& index,
                        const text::TaggerLexicon& lexicon, const MiningConfig& cfg) {
  cfg.validate();
  std::vector<std::size_t> eligible;
  MiningResult result;
  for (std::size_t i = 0; i < ego_records.size(); ++i) {
    if (ego_records[i].scenario.empty()) {
      ++result.skipped_no_scenario;
    } else {
      eligible.push_back(i);
    }
  }

  result.pairs.resize(eligible.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      const auto& ego = ego_records[eligible[k]];
      result.pairs[k] = rank_one(ego, index.scenario(ego.scenario), lexicon, cfg.top_k);
    }
  };

  const std::size_t n_threads = std::max<std::size_t>(1, std::min(cfg.threads, eligible.size()));
  if (n_threads == 1) {
    work(0, eligible.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (eligible.size() + n_threads - 1) / n_threads;
    for (std::size_t t = 0; t < n_threads; ++t) {
      const auto b = std::min(eligible.size(), t * chunk);
      const auto e = std::min(eligible.size(), b + chunk);
      pool.emplace_back(work, b, e);
    }
    for (auto& th : pool) th.join();
  }
  return result;
}

std::pair<double, double> extend_boundaries(const data::ClipRecord& record, double alpha_s,
                                            double video_start_s, double video_end_s) {
  if (!(alpha_s >= 0.0)) throw ValidationError("alpha_s must be >= 0");
  if (!(video_start_s <= record.start_s && record.start_s < record.end_s &&
        record.end_s <= video_end_s))
    throw ValidationError("clip " + record.clip_id + " span is not inside its video bounds");
  return {std::max(video_start_s, record.start_s - alpha_s),
          std::min(video_end_s, record.end_s + alpha_s)};
}

std::vector<data::ClipRecord> build_longform_clips(const data::TranscriptDocument& doc,
                                                   const MiningConfig& cfg,
                                                   const text::Refiner& backend,
                                                   data::ViewLabel view,
                                                   const std::string& scenario) {
  cfg.validate();
  std::vector<data::ClipRecord> out;
  const auto& ns = doc.narrations;
  const auto w = cfg.narrations_per_window;
  for (std::size_t begin = 0, window = 0; begin + w <= ns.size(); begin += w, ++window) {
    const double start = ns[begin].start_s;
    const double end = ns[begin + w - 1].end_s;
    const double span = end - start;
    if (span < cfg.longform_min_s || span > cfg.longform_max_s) continue;
    std::vector<std::string> texts;
    for (std::size_t i = begin; i < begin + w; ++i) texts.push_back(ns[i].text);
    data::ClipRecord r;
    r.clip_id = doc.video_id + "#lf" + std::to_string(window);
    r.video_id = doc.video_id;
    r.view = view;
    r.scenario = scenario;
    r.start_s = start;
    r.end_s = end;
    r.raw_text = backend.summarize(texts);
    out.push_back(std::move(r));
  }
  return out;
}

std::string serialize_pairs(const std::vector<EgoPairs>& pairs) {
  std::string out;
  for (const auto& p : pairs) {
    nlohmann::json j;
    j["ego_clip_id"] = p.ego_clip_id;
    auto ids = nlohmann::json::array();
    auto nouns = nlohmann::json::array();
    auto verbs = nlohmann::json::array();
    for (const auto& c : p.candidates) {
      ids.push_back(c.exo_clip_id);
      nouns.push_back(c.noun_overlap);
      verbs.push_back(c.verb_overlap);
    }
    j["exo_clip_ids"] = ids;
    j["noun_overlaps"] = nouns;
    j["verb_overlaps"] = verbs;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<EgoPairs> parse_pairs(const std::string& text, const std::string& source) {
  std::vector<EgoPairs> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      EgoPairs p;
      p.ego_clip_id = j.at("ego_clip_id").get<std::string>();
      auto ids = j.at("exo_clip_ids").get<std::vector<std::string>>();
      auto nouns = j.value("noun_overlaps", std::vector<std::size_t>(ids.size(), 0));
      auto verbs = j.value("verb_overlaps", std::vector<std::size_t>(ids.size(), 0));
      if (nouns.size() != ids.size() || verbs.size() != ids.size())
        throw ParseError(source, line_no, "overlap arrays must match exo_clip_ids length");
      for (std::size_t i = 0; i < ids.size(); ++i)
        p.candidates.push_back({p.ego_clip_id, ids[i], nouns[i], verbs[i], nouns[i] + verbs[i]});
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(source, line_no, e.what());
    }
  }
  return out;
}

void save_pairs(const std::vector<EgoPairs>& pairs, const std::filesystem::path& path) {
  io::write_file_text(path, serialize_pairs(pairs));
}

std::vector<EgoPairs> load_pairs(const std::filesystem::path& path) {
  return parse_pairs(io::read_file_text(path), path.string());
}

}  // namespace egoexo::mining
