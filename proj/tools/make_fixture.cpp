#include <CLI11.hpp>

#include <iostream>

#include "egoexo/errors.hpp"
#include "egoexo/synthetic/generators.hpp"

// Writes the synthetic desk corpus used by the end-to-end pipeline.
int main(int argc, char** argv) {
  CLI::App app{"Generate the synthetic desk-scale ego/exo corpus", "egoexo_fixture"};
  std::string out_dir;
  egoexo::synthetic::DeskCorpusConfig cfg;
  app.add_option("--out", out_dir, "output directory")->required();
  app.add_option("--seed", cfg.seed, "generator seed");
  app.add_option("--ego_per_scenario", cfg.ego_per_scenario);
  app.add_option("--exo_videos_per_scenario", cfg.exo_videos_per_scenario);
  app.add_option("--narrations_per_video", cfg.narrations_per_video);
  app.add_option("--feature_dim", cfg.feature_dim);
  app.add_option("--latent_dim", cfg.latent_dim);
  app.add_option("--noise", cfg.noise);
  CLI11_PARSE(app, argc, argv);
  try {
    const auto corpus = egoexo::synthetic::make_desk_corpus(cfg);
    egoexo::synthetic::write_desk_corpus(corpus, out_dir);
    std::cout << "wrote " << corpus.ego.records.size() << " ego and " << corpus.exo.records.size()
              << " exo clips to " << out_dir << "\n";
  } catch (const egoexo::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
