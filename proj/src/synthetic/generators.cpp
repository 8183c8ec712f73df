#include "egoexo/synthetic/generators.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include <json.hpp>

#include "egoexo/data/feature_store.hpp"
#include "egoexo/data/manifest.hpp"
#include "egoexo/errors.hpp"
#include "egoexo/io.hpp"
#include "egoexo/nn/layers.hpp"
#include "egoexo/text/refiner.hpp"

namespace egoexo::synthetic {

namespace {

struct VerbForms {
  const char* lemma;
  const char* third;
  const char* ing;
  const char* past;
};

const VerbForms kVerbs[] = {
    {"cut", "cuts", "cutting", "cut"},          {"wash", "washes", "washing", "washed"},
    {"pour", "pours", "pouring", "poured"},     {"stir", "stirs", "stirring", "stirred"},
    {"peel", "peels", "peeling", "peeled"},     {"fold", "folds", "folding", "folded"},
    {"glue", "glues", "gluing", "glued"},       {"paint", "paints", "painting", "painted"},
    {"tighten", "tightens", "tightening", "tightened"},
    {"loosen", "loosens", "loosening", "loosened"},
    {"pump", "pumps", "pumping", "pumped"},     {"clean", "cleans", "cleaning", "cleaned"},
};

const char* kNouns[] = {"onion", "tomato", "cup",   "pan",  "water", "knife", "paper", "card",
                        "brush", "box",    "wheel", "chain", "tyre", "bolt",  "brake"};

const char* kStopwords[] = {"the", "a", "an", "this", "that", "with", "like", "here", "it", "of", "and",
                            "c", "to", "some", "on", "in"};

struct Scenario {
  const char* name;
  std::vector<std::pair<const char*, const char*>> actions;  // verb lemma, noun
};

const std::vector<Scenario>& scenarios() {
  static const std::vector<Scenario> s = {
      {"cooking",
       {{"cut", "onion"}, {"cut", "tomato"}, {"wash", "cup"}, {"pour", "water"}, {"stir", "pan"},
        {"peel", "onion"}, {"wash", "knife"}}},
      {"crafts",
       {{"fold", "paper"}, {"glue", "card"}, {"paint", "box"}, {"cut", "paper"}, {"clean", "brush"},
        {"fold", "card"}}},
      {"bike_repair",
       {{"tighten", "bolt"}, {"loosen", "bolt"}, {"pump", "tyre"}, {"clean", "chain"},
        {"remove", "wheel"}, {"tighten", "brake"}}},
  };
  return s;
}

const VerbForms& forms(const std::string& lemma) {
  static const VerbForms remove{"remove", "removes", "removing", "removed"};
  if (lemma == "remove") return remove;
  for (const auto& v : kVerbs)
    if (lemma == v.lemma) return v;
  throw ValidationError("synthetic: unknown verb " + lemma);
}

data::FeatureMatrix view_features(const std::string& id, const Eigen::VectorXd& latent, const nn::Matrix& view,
                                  int frames, double noise, std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  data::FeatureMatrix f;
  f.clip_id = id;
  f.frames.resize(frames, view.rows());
  const Eigen::VectorXd base = view * latent;
  for (int t = 0; t < frames; ++t)
    for (Eigen::Index c = 0; c < view.rows(); ++c) f.frames(t, c) = static_cast<float>(base(c) + noise * n01(rng));
  return f;
}

Eigen::VectorXd unit_latent(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Eigen::VectorXd a(dim);
  for (int i = 0; i < dim; ++i) a(i) = n01(rng);
  return a.normalized();
}

}  // namespace

std::string desk_lexicon_tsv() {
  std::string out = "# surface\tlemma\tpos\n";
  auto verb = [&](const VerbForms& v) {
    std::set<std::string> seen;
    for (const char* s : {v.lemma, v.third, v.ing, v.past})
      if (seen.insert(s).second) out += std::string(s) + "\t" + v.lemma + "\tverb\n";
  };
  for (const auto& v : kVerbs) verb(v);
  verb(forms("remove"));
  for (const char* n : kNouns) {
    out += std::string(n) + "\t" + n + "\tnoun\n";
    out += std::string(n) + (std::string(n).back() == 'h' ? "es" : "s") + "\t" + n + "\tnoun\n";
  }
  for (const char* s : kStopwords) out += std::string(s) + "\t-\tstop\n";
  return out;
}

DeskCorpus make_desk_corpus(const DeskCorpusConfig& cfg) {
  if (cfg.ego_per_scenario < 1 || cfg.exo_videos_per_scenario < 1 || cfg.narrations_per_video < 1 ||
      cfg.feature_dim < 1 || cfg.latent_dim < 1 || cfg.frames_min < 1 || cfg.frames_max < cfg.frames_min)
    throw ValidationError("desk corpus: sizes must be positive and frames_min <= frames_max");
  std::mt19937_64 rng(cfg.seed);
  const double view_std = 1.0 / std::sqrt(static_cast<double>(cfg.latent_dim));
  const nn::Matrix A = nn::normal_matrix(cfg.feature_dim, cfg.latent_dim, view_std, rng);
  const nn::Matrix B = nn::normal_matrix(cfg.feature_dim, cfg.latent_dim, view_std, rng);

  std::map<std::string, Eigen::VectorXd> latents;
  for (const auto& sc : scenarios())
    for (const auto& [v, n] : sc.actions) {
      const auto key = std::string(v) + " " + n;
      if (!latents.count(key)) latents[key] = unit_latent(cfg.latent_dim, rng);
    }

  std::uniform_int_distribution<int> frames(cfg.frames_min, cfg.frames_max);
  DeskCorpus out;
  out.lexicon_tsv = desk_lexicon_tsv();
  out.ego.view = data::ViewLabel::ego;
  out.exo.view = data::ViewLabel::exo;

  const char* asr[] = {"so now I'm gonna {v} the {n} okay", "we're going to {v} the {n}",
                       "okay just {v} the {n} like this", "now {ing} the {n}", "I'm {ing} the {n} here",
                       "okay we will {v} the {n}"};
  auto fill = [](std::string t, const VerbForms& f, const std::string& noun) {
    auto rep = [&](const std::string& key, const std::string& val) {
      for (auto p = t.find(key); p != std::string::npos; p = t.find(key)) t.replace(p, key.size(), val);
    };
    rep("{v}", f.lemma);
    rep("{ing}", f.ing);
    rep("{n}", noun);
    return t;
  };

  int ego_count = 0;
  std::map<std::string, std::string> action_of;  // exo clip id -> action
  std::vector<std::pair<std::string, std::string>> ego_actions;  // (ego id, action)
  for (const auto& sc : scenarios()) {
    const auto& acts = sc.actions;
    std::uniform_int_distribution<std::size_t> pick(0, acts.size() - 1);
    for (int v = 0; v < cfg.exo_videos_per_scenario; ++v) {
      const std::string vid = std::string("exo_") + sc.name + "_" + std::to_string(v);
      double t = 0.0;
      for (int k = 0; k < cfg.narrations_per_video; ++k) {
        const auto& [verb, noun] = acts[static_cast<std::size_t>(k + v) < acts.size() ? static_cast<std::size_t>(k + v) : pick(rng)];
        data::ClipRecord r;
        r.clip_id = vid + "_" + std::to_string(k);
        r.video_id = vid;
        r.view = data::ViewLabel::exo;
        r.scenario = sc.name;
        r.start_s = t;
        r.end_s = t + 4.0;
        t += 5.0;
        std::uniform_int_distribution<std::size_t> tpl(0, std::size(asr) - 1);
        r.raw_text = fill(asr[tpl(rng)], forms(verb), noun);
        action_of[r.clip_id] = std::string(verb) + " " + noun;
        out.exo.records.push_back(r);
        out.exo_features.push_back(
            view_features(r.clip_id, latents.at(std::string(verb) + " " + noun), B, frames(rng), cfg.noise, rng));
      }
    }
    for (int e = 0; e < cfg.ego_per_scenario; ++e) {
      const auto& [verb, noun] = acts[static_cast<std::size_t>(e) % acts.size()];
      data::ClipRecord r;
      r.clip_id = "ego_" + std::to_string(ego_count);
      r.video_id = std::string("ego_") + sc.name + "_" + std::to_string(e / 4);
      r.view = data::ViewLabel::ego;
      r.scenario = sc.name;
      r.start_s = 3.0 * (e % 4);
      r.end_s = r.start_s + 2.5;
      r.raw_text = std::string("#C C ") + forms(verb).third + " the " + noun;
      ego_actions.emplace_back(r.clip_id, std::string(verb) + " " + noun);
      out.ego.records.push_back(r);
      out.ego_features.push_back(
          view_features(r.clip_id, latents.at(std::string(verb) + " " + noun), A, frames(rng), cfg.noise, rng));
      ++ego_count;
    }
  }
  std::map<std::string, std::string> scenario_of;
  for (const auto& r : out.exo.records) scenario_of[r.clip_id] = r.scenario;
  for (std::size_t e = 0; e < ego_actions.size(); ++e) {
    const auto& [ego_id, action] = ego_actions[e];
    const auto& scenario = out.ego.records[e].scenario;
    const bool intra = e % 2 == 0;
    std::vector<std::string> matches, distractors;
    for (const auto& r : out.exo.records) {
      if (action_of[r.clip_id] == action) {
        matches.push_back(r.clip_id);
      } else if ((r.scenario == scenario) == intra) {
        distractors.push_back(r.clip_id);
      }
    }
    if (matches.empty() || distractors.size() < 4) continue;
    std::shuffle(distractors.begin(), distractors.end(), rng);
    metrics::CandidateGroup g;
    g.query_id = ego_id;
    g.label = intra ? "intra" : "inter";
    g.correct = static_cast<int>(e % 5);
    g.candidates.assign(distractors.begin(), distractors.begin() + 4);
    g.candidates.insert(g.candidates.begin() + g.correct, matches[e % matches.size()]);
    out.mcq.push_back(std::move(g));
  }
  if (cfg.unassigned_ego) {
    data::ClipRecord r;
    r.clip_id = "ego_" + std::to_string(ego_count);
    r.video_id = "ego_unassigned";
    r.view = data::ViewLabel::ego;
    r.start_s = 0.0;
    r.end_s = 2.0;
    r.raw_text = "#C C cuts the onion #unsure";
    out.ego.records.push_back(r);
    out.ego_features.push_back(view_features(r.clip_id, latents.at("cut onion"), A, frames(rng), cfg.noise, rng));
  }
  return out;
}

void write_desk_corpus(const DeskCorpus& corpus, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  data::save_manifest(corpus.ego, dir / "ego.jsonl");
  data::save_manifest(corpus.exo, dir / "exo.jsonl");
  const auto dim = corpus.ego_features.empty() ? 0 : corpus.ego_features.front().dim();
  data::write_feature_store(corpus.ego_features, dim, dir / "ego.cvfs");
  data::write_feature_store(corpus.exo_features, dim, dir / "exo.cvfs");
  io::write_file_text(dir / "lexicon.tsv", corpus.lexicon_tsv);
  std::string groups;
  for (const auto& g : corpus.mcq)
    groups += nlohmann::json({{"query_id", g.query_id},
                              {"candidates", g.candidates},
                              {"correct", g.correct},
                              {"label", g.label}})
                  .dump() +
              "\n";
  io::write_file_text(dir / "mcq.jsonl", groups);
}

LatentRetrievalTask make_latent_retrieval_task(const LatentRetrievalConfig& cfg) {
  if (cfg.actions < 2 || cfg.latent_dim < 1 || cfg.feature_dim < 1 || cfg.frames < 1 || cfg.train_draws < 1)
    throw ValidationError("latent retrieval task: invalid sizes");
  std::mt19937_64 rng(cfg.seed);
  const double view_std = 1.0 / std::sqrt(static_cast<double>(cfg.latent_dim));
  const nn::Matrix A = nn::normal_matrix(cfg.feature_dim, cfg.latent_dim, view_std, rng);
  const nn::Matrix B = nn::normal_matrix(cfg.feature_dim, cfg.latent_dim, view_std, rng);
  LatentRetrievalTask task;
  std::vector<Eigen::VectorXd> latents;
  for (int i = 0; i < cfg.actions; ++i) {
    latents.push_back(unit_latent(cfg.latent_dim, rng));
    task.texts.push_back("action" + std::to_string(i));
    Eigen::VectorXd padded = Eigen::VectorXd::Zero(std::max(cfg.feature_dim, cfg.latent_dim));
    padded.head(cfg.latent_dim) = latents.back();
    task.text_table[task.texts.back()] = padded;
  }
  for (int d = 0; d < cfg.train_draws; ++d)
    for (int i = 0; i < cfg.actions; ++i) {
      retrieval::TrainingSample s;
      const auto id = task.texts[static_cast<std::size_t>(i)] + "_" + std::to_string(d);
      s.ego = view_features("ego_" + id, latents[static_cast<std::size_t>(i)], A, cfg.frames, cfg.noise, rng);
      s.exo = view_features("exo_" + id, latents[static_cast<std::size_t>(i)], B, cfg.frames, cfg.noise, rng);
      s.ego_text = s.exo_text = task.texts[static_cast<std::size_t>(i)];
      task.train.push_back(std::move(s));
    }
  for (int i = 0; i < cfg.actions; ++i) {
    const auto& name = task.texts[static_cast<std::size_t>(i)];
    task.test_ego.push_back(view_features("ego_" + name, latents[static_cast<std::size_t>(i)], A, cfg.frames, cfg.noise, rng));
    task.test_exo.push_back(view_features("exo_" + name, latents[static_cast<std::size_t>(i)], B, cfg.frames, cfg.noise, rng));
  }
  return task;
}

CopyTask make_copy_task(const CopyTaskConfig& cfg) {
  if (cfg.verbs < 2 || cfg.nouns < 2 || cfg.train_samples < 1 || cfg.test_samples < 2)
    throw ValidationError("copy task: invalid sizes");
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::string> verbs, nouns;
  for (int i = 0; i < cfg.verbs; ++i) verbs.push_back("verb" + std::to_string(i));
  for (int i = 0; i < cfg.nouns; ++i) nouns.push_back("noun" + std::to_string(i));

  std::vector<std::string> words = {"c", "the"};
  words.insert(words.end(), verbs.begin(), verbs.end());
  words.insert(words.end(), nouns.begin(), nouns.end());
  CopyTask task;
  task.vocab = captioning::Vocabulary::build(words);

  std::normal_distribution<double> n01(0.0, 1.0);
  auto noise = [&] {
    nn::Matrix m(cfg.frames, cfg.feature_dim);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n01(rng);
    return m;
  };
  std::uniform_int_distribution<int> pv(0, cfg.verbs - 1), pn(0, cfg.nouns - 1);
  auto sample = [&] {
    const auto& v = verbs[static_cast<std::size_t>(pv(rng))];
    const auto& n = nouns[static_cast<std::size_t>(pn(rng))];
    captioning::CaptionSample s;
    s.ego = noise();
    s.retrieved.push_back({noise(), v + " the " + n});
    s.target = "c " + v + " the " + n;
    return s;
  };
  for (int i = 0; i < cfg.train_samples; ++i) task.train.push_back(sample());
  for (int i = 0; i < cfg.test_samples; ++i) task.test.push_back(sample());
  // Derangement by rotation: sample i borrows the retrieval of sample i+1.
  task.test_random = task.test;
  for (std::size_t i = 0; i < task.test.size(); ++i)
    task.test_random[i].retrieved = task.test[(i + 1) % task.test.size()].retrieved;
  return task;
}

std::vector<captioning::CaptionSample> without_retrieval(const std::vector<captioning::CaptionSample>& samples) {
  auto out = samples;
  for (auto& s : out) s.retrieved.clear();
  return out;
}

}  // namespace egoexo::synthetic
