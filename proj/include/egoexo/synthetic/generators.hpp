#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "egoexo/captioning/captioner.hpp"
#include "egoexo/data/types.hpp"
#include "egoexo/metrics/retrieval_metrics.hpp"
#include "egoexo/retrieval/trainer.hpp"

namespace egoexo::synthetic {

/// Small ego/exo corpus with latent action structure. Ego captions are in the
/// "#C C cuts the onion" style, exo narrations read like ASR transcripts.
struct DeskCorpusConfig {
  int ego_per_scenario = 12;
  int exo_videos_per_scenario = 3;
  int narrations_per_video = 8;
  int feature_dim = 16;
  int latent_dim = 8;
  int frames_min = 6;
  int frames_max = 10;
  double noise = 0.1;
  bool unassigned_ego = true;  // one extra ego clip without a scenario
  std::uint64_t seed = 7;
};

struct DeskCorpus {
  data::DatasetManifest ego, exo;
  std::vector<data::FeatureMatrix> ego_features, exo_features;
  std::string lexicon_tsv;
  /// One 5-way group per assigned ego clip; "intra" distractors share the
  /// scenario, "inter" distractors come from other scenarios.
  std::vector<metrics::CandidateGroup> mcq;
};

std::string desk_lexicon_tsv();
DeskCorpus make_desk_corpus(const DeskCorpusConfig& cfg);
/// ego.jsonl, exo.jsonl, ego.cvfs, exo.cvfs, lexicon.tsv and mcq.jsonl under `dir`.
void write_desk_corpus(const DeskCorpus& corpus, const std::filesystem::path& dir);

/// Latent actions a_i seen through two random view transforms:
/// ego frames A a + noise, exo frames B a + noise, text feature a (zero
/// padded to the feature width so it shares the embedding space).
struct LatentRetrievalTask {
  std::vector<retrieval::TrainingSample> train;
  std::vector<data::FeatureMatrix> test_ego, test_exo;  // fresh noise, one per action
  std::vector<std::string> texts;                       // "action<i>"
  std::map<std::string, Eigen::VectorXd> text_table;
};

struct LatentRetrievalConfig {
  int actions = 100;
  int latent_dim = 16;
  int feature_dim = 32;
  int frames = 4;
  double noise = 0.1;
  int train_draws = 4;  // noisy samples per action for training
  std::uint64_t seed = 11;
};

LatentRetrievalTask make_latent_retrieval_task(const LatentRetrievalConfig& cfg);

/// Ego features carry no signal; the target "c <verb> the <noun>" can only be
/// recovered from the retrieved exo caption "<verb> the <noun>".
struct CopyTaskConfig {
  int verbs = 20;
  int nouns = 20;
  int train_samples = 2000;
  int test_samples = 200;
  int feature_dim = 16;
  int frames = 4;
  std::uint64_t seed = 13;
};

struct CopyTask {
  captioning::Vocabulary vocab;
  std::vector<captioning::CaptionSample> train;  // one retrieved exo each
  std::vector<captioning::CaptionSample> test;
  std::vector<captioning::CaptionSample> test_random;  // retrieved exo of another sample
};

CopyTask make_copy_task(const CopyTaskConfig& cfg);

/// Drops the retrieved clips (K = 0 view of the same samples).
std::vector<captioning::CaptionSample> without_retrieval(const std::vector<captioning::CaptionSample>& samples);

}  // namespace egoexo::synthetic
