#include <doctest.h>

#include <array>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>

#include "egoexo/errors.hpp"
#include "egoexo/retrieval/encoder.hpp"
#include "egoexo/retrieval/index.hpp"
#include "egoexo/retrieval/loss.hpp"
#include "egoexo/retrieval/trainer.hpp"
#include "egoexo/synthetic/generators.hpp"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"

using namespace egoexo;
using namespace egoexo::retrieval;

namespace {

std::vector<SampleEntities> random_batch(std::mt19937_64& rng, long b, int alphabet = 4) {
  std::vector<SampleEntities> out;
  for (long i = 0; i < b; ++i) out.push_back({oracle::random_profile(rng, alphabet, alphabet), oracle::random_profile(rng, alphabet, alphabet)});
  return out;
}

LossConfig with_rule(EntityRule r, double tau = 0.05) {
  LossConfig c;
  c.entity_rule = r;
  c.temperature = tau;
  return c;
}

data::FeatureMatrix random_clip(int t, int d, std::mt19937_64& rng) {
  std::normal_distribution<float> n;
  data::FeatureMatrix f{"c", data::FrameMatrix(t, d)};
  for (Eigen::Index i = 0; i < f.frames.size(); ++i) f.frames.data()[i] = n(rng);
  return f;
}

}  // namespace

TEST_CASE("degenerate self batch has zero loss") {
  nn::Matrix u = nn::Matrix::Zero(1, 3);
  u(0, 1) = 1.0;
  const std::vector<SampleEntities> ents(1);
  const auto mask = build_positive_mask(ents, LossConfig{});
  const auto t = egoexo_nce(u, u, u, u, mask, with_rule(EntityRule::both, 1.0));
  CHECK(std::abs(t.total) < 1e-15);
}

TEST_CASE("orthogonal batch of two") {
  // eight mutually orthogonal unit vectors: every exponent is 1, each
  // direction has 4 positive terms out of 8, so total = 2 log 2
  const nn::Matrix eye = nn::Matrix::Identity(8, 8);
  const std::vector<SampleEntities> ents(2);
  const auto mask = build_positive_mask(ents, LossConfig{});
  const auto t = egoexo_nce(eye.middleRows(0, 2), eye.middleRows(2, 2), eye.middleRows(4, 2), eye.middleRows(6, 2), mask,
                            with_rule(EntityRule::both, 1.0));
  CHECK(t.total == doctest::Approx(1.3862943611198906).epsilon(1e-12));
  CHECK(t.v2t == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(t.t2v == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("loss matches the brute-force formula") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    const long b = 1 + trial % 8, d = 2 + trial % 15;
    const auto ents = random_batch(rng, b);
    const auto rule = trial % 2 ? EntityRule::either : EntityRule::both;
    const auto cfg = with_rule(rule);
    const auto zg = oracle::random_unit_rows(b, d, rng), zx = oracle::random_unit_rows(b, d, rng);
    const auto ug = oracle::random_unit_rows(b, d, rng), ux = oracle::random_unit_rows(b, d, rng);
    const auto t = egoexo_nce(zg, zx, ug, ux, build_positive_mask(ents, cfg), cfg);
    CHECK(t.total == doctest::Approx(oracle::egoexo_nce(zg, zx, ug, ux, ents, rule == EntityRule::both, 0.05)).epsilon(1e-9));
    CHECK(t.total >= 0.0);
    CHECK(t.total == doctest::Approx(t.v2t + t.t2v).epsilon(1e-12));
  }
}

TEST_CASE("analytic gradient matches central differences") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const long b = 1 + trial % 4, d = 2 + trial % 7;
    const auto ents = random_batch(rng, b, 3);
    const auto cfg = with_rule(trial % 2 ? EntityRule::either : EntityRule::both, 0.5);
    const auto mask = build_positive_mask(ents, cfg);
    std::array<nn::Matrix, 4> m = {oracle::random_unit_rows(b, d, rng), oracle::random_unit_rows(b, d, rng),
                                   oracle::random_unit_rows(b, d, rng), oracle::random_unit_rows(b, d, rng)};
    const auto t = egoexo_nce(m[0], m[1], m[2], m[3], mask, cfg);
    const std::array<const nn::Matrix*, 4> grads = {&t.d_ego_video, &t.d_exo_video, &t.d_ego_text, &t.d_exo_text};
    const double h = 1e-4;
    for (int which = 0; which < 4; ++which)
      for (Eigen::Index k = 0; k < m[which].size(); ++k) {
        auto p = m, q = m;
        p[which].data()[k] += h;
        q[which].data()[k] -= h;
        const double num = (egoexo_nce(p[0], p[1], p[2], p[3], mask, cfg).total -
                            egoexo_nce(q[0], q[1], q[2], q[3], mask, cfg).total) /
                           (2 * h);
        const double ana = grads[which]->data()[k];
        CHECK(std::abs(num - ana) <= 1e-4 * std::max(1.0, std::abs(num)));
      }
  }
}

TEST_CASE("graph node passes the loss gradient through") {
  std::mt19937_64 rng(12);
  const auto ents = random_batch(rng, 3);
  const auto mask = build_positive_mask(ents, LossConfig{});
  nn::Var a(oracle::random_unit_rows(3, 4, rng), true), b(oracle::random_unit_rows(3, 4, rng), true),
      c(oracle::random_unit_rows(3, 4, rng), true), e(oracle::random_unit_rows(3, 4, rng), true);
  LossTerms terms;
  const auto loss = egoexo_nce_loss(a, b, c, e, mask, LossConfig{}, &terms);
  nn::backward(loss);
  CHECK(loss.scalar() == terms.total);
  CHECK((c.grad() - terms.d_ego_text).norm() == 0.0);
}

TEST_CASE("mask equals membership enumeration and has the required structure") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const long b = 1 + trial % 6;
    const auto ents = random_batch(rng, b);
    for (auto rule : {EntityRule::both, EntityRule::either}) {
      const auto mask = build_positive_mask(ents, with_rule(rule));
      REQUIRE(mask.positive.rows() == 2 * b);
      for (long r = 0; r < 2 * b; ++r) {
        int count = 0;
        for (long c = 0; c < 2 * b; ++c) {
          CHECK(mask(r, c) == oracle::positive(ents, rule == EntityRule::both, r, c));
          count += mask(r, c);
        }
        CHECK(count >= 2);
      }
      for (long i = 0; i < b; ++i) {
        CHECK(mask(i, i));
        CHECK(mask(i, i + b));
        CHECK(mask.positive.row(i) == mask.positive.row(i + b));
        for (long j = 0; j < b; ++j)
          for (long v = 0; v < 2; ++v) CHECK(mask(i, j + v * b) == mask(j, i + v * b));
      }
    }
  }
}

TEST_CASE("shared noun and verb make ego texts positive for both samples") {
  std::vector<SampleEntities> ents(3);
  ents[0].ego = {{"bread"}, {"toast"}};
  ents[1].ego = {{"bread", "toaster"}, {"toast"}};
  ents[2].ego = {{"bread"}, {"cut"}};
  const auto both = build_positive_mask(ents, LossConfig{});
  for (long r : {0L, 1L, 3L, 4L}) {
    CHECK(both(r, 0));
    CHECK(both(r, 1));
  }
  CHECK_FALSE(both(0, 2));
  CHECK_FALSE(both(0, 4));  // exo texts carry no entities here
  const auto either = build_positive_mask(ents, with_rule(EntityRule::either));
  CHECK(either(0, 2));
  CHECK(either(2, 1));

  const auto one = build_positive_mask(std::vector<SampleEntities>(1), LossConfig{});
  CHECK(one.positive.count() == 4);
}

TEST_CASE("non-finite embeddings raise a numeric error") {
  std::mt19937_64 rng(14);
  auto m = oracle::random_unit_rows(2, 3, rng);
  auto bad = m;
  bad(1, 1) = std::nan("");
  const auto mask = build_positive_mask(std::vector<SampleEntities>(2), LossConfig{});
  CHECK_THROWS_AS(egoexo_nce(m, bad, m, m, mask, LossConfig{}), NumericError);
  CHECK_THROWS_AS(egoexo_nce(m, m, m, oracle::random_unit_rows(3, 3, rng), mask, LossConfig{}), ShapeError);
  CHECK_THROWS_AS(parse_entity_rule("xor"), ValidationError);
  CHECK(parse_entity_rule("or") == EntityRule::either);
}

TEST_CASE("property: raising positives and lowering negatives lowers the loss") {
  // With V = identity (d = 2B), S[r, c] = U[c, r] / tau, so any score
  // matrix can be dialled in through the text rows.
  std::mt19937_64 rng(15);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> step(0.01, 0.5);
  for (int trial = 0; trial < 200; ++trial) {
    const long b = 1 + trial % 5;
    const auto ents = random_batch(rng, b);
    const auto cfg = with_rule(EntityRule::both, 1.0);
    const auto mask = build_positive_mask(ents, cfg);
    nn::Matrix s(2 * b, 2 * b);
    for (long i = 0; i < s.size(); ++i) s.data()[i] = n(rng);
    const nn::Matrix eye = nn::Matrix::Identity(2 * b, 2 * b);
    auto loss = [&](const nn::Matrix& scores) {
      const nn::Matrix u = scores.transpose();
      return egoexo_nce(eye.topRows(b), eye.bottomRows(b), u.topRows(b), u.bottomRows(b), mask, cfg).total;
    };
    nn::Matrix moved = s;
    for (long r = 0; r < 2 * b; ++r)
      for (long c = 0; c < 2 * b; ++c) moved(r, c) += mask(r, c) ? step(rng) : -step(rng);
    if (mask.positive.all())
      CHECK(loss(moved) == 0.0);  // nothing to push away
    else
      CHECK(loss(moved) < loss(s));
  }
}

TEST_CASE("encoder outputs unit vectors deterministically") {
  std::mt19937_64 rng(16);
  CrossViewEncoder enc({2, 8, 2, 6}, 3);
  for (int t = 1; t <= 6; ++t) {
    const auto clip = random_clip(t, 8, rng);
    const auto a = enc.encode(clip);
    CHECK(std::abs(a.norm() - 1.0) < 1e-6);
    const auto again = enc.encode(clip);
    CHECK(std::memcmp(a.data(), again.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0);
  }
  CHECK_THROWS_AS(enc.encode(random_clip(2, 7, rng)), ShapeError);
  CHECK_THROWS_AS(enc.encode(random_clip(7, 8, rng)), ShapeError);
  CHECK_THROWS_AS(CrossViewEncoder({1, 9, 2, 4}, 0), ValidationError);
}

TEST_CASE("text adapters give unit, reproducible vectors") {
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  const auto a = TextEncoderAdapter::hashed(16, 64, 5);
  const auto b = TextEncoderAdapter::hashed(16, 64, 5);
  const auto va = a.encode("the person cuts the onion");
  CHECK(std::abs(va.norm() - 1.0) < 1e-9);
  CHECK(va == b.encode("the person cuts the onion"));
  CHECK(a.bucket_ids("cut") == a.bucket_ids("CUT"));
  for (int id : a.bucket_ids("the person cuts")) {
    CHECK(id >= 0);
    CHECK(id < 64);
  }

  std::map<std::string, Eigen::VectorXd> table{{"x", Eigen::VectorXd::Constant(4, 2.0)}};
  const auto look = TextEncoderAdapter::lookup(4, table);
  CHECK((look.encode("x") - Eigen::VectorXd::Constant(4, 0.5)).norm() < 1e-12);
  CHECK_THROWS_AS(look.encode("missing"), ValidationError);
}

TEST_CASE("frame sampling") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const int t = 1 + trial % 12;
    const auto idx = sample_frames(t, 4, rng);
    CHECK(idx.size() == static_cast<std::size_t>(std::min(t, 4)));
    CHECK(std::is_sorted(idx.begin(), idx.end()));
    CHECK(std::adjacent_find(idx.begin(), idx.end()) == idx.end());
    for (int i : idx) {
      CHECK(i >= 0);
      CHECK(i < t);
    }
  }
  CHECK(even_frames(8, 4) == std::vector<int>{1, 3, 5, 7});
  CHECK(even_frames(3, 4) == std::vector<int>{0, 1, 2});
}

TEST_CASE("index round trip and top-k scoring") {
  std::mt19937_64 rng(18);
  RetrievalIndex idx;
  for (int i = 0; i < 50; ++i) idx.clip_ids.push_back("c" + std::to_string(100 + i));
  idx.video = oracle::random_unit_rows(50, 6, rng);
  idx.text = oracle::random_unit_rows(50, 6, rng);
  idx.temperature = 0.05;
  // float32 storage: compare after one round trip
  idx = decode_index(encode_index(idx));
  testutil::TempDir dir;
  save_index(idx, dir / "i.cvix");
  const auto back = load_index(dir / "i.cvix");
  CHECK(back.clip_ids == idx.clip_ids);
  CHECK(back.video == idx.video);
  CHECK(back.text == idx.text);
  CHECK(back.temperature == 0.05);

  const Eigen::VectorXd q = oracle::random_unit_rows(1, 6, rng).row(0).transpose();
  for (auto mode : {ScoreMode::exp_similarity, ScoreMode::cosine}) {
    const auto top = retrieve_topk(q, idx, 50, mode);
    Eigen::RowVectorXd scores(50);
    for (int i = 0; i < 50; ++i) {
      const double v = idx.video.row(i).dot(q), t = idx.text.row(i).dot(q);
      scores(i) = mode == ScoreMode::cosine ? 0.5 * (v + t) : 0.5 * (std::exp(v / 0.05) + std::exp(t / 0.05));
    }
    const auto order = oracle::ranking(scores);
    REQUIRE(top.size() == 50);
    for (int r = 0; r < 50; ++r) {
      CHECK(top[r].first == idx.clip_ids[order[r]]);
      CHECK(top[r].second == doctest::Approx(scores(order[r])).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(retrieve_topk(q, idx, 0), ValidationError);
  CHECK(retrieve_topk(q, idx, 3).size() == 3);

  auto bad = encode_index(idx);
  bad[0] = 'Z';
  CHECK_THROWS_AS(decode_index(bad), FormatError);
  bad = encode_index(idx);
  bad.resize(bad.size() - 8);
  CHECK_THROWS_AS(decode_index(bad), CorruptionError);
}

TEST_CASE("exact match ranks first; ties go to the smaller id; weaker additions keep the argmax") {
  std::mt19937_64 rng(19);
  RetrievalIndex idx;
  idx.clip_ids = {"b", "a", "z"};
  idx.video = oracle::random_unit_rows(3, 5, rng);
  idx.text = idx.video;
  idx.video.row(2) = idx.video.row(0);
  idx.text.row(2) = idx.text.row(0);
  Eigen::VectorXd q = idx.video.row(1).transpose();
  CHECK(retrieve_topk(q, idx, 1)[0].first == "a");
  q = idx.video.row(0).transpose();
  const auto top = retrieve_topk(q, idx, 2);
  CHECK(top[0].first == "b");
  CHECK(top[1].first == "z");

  // appending strictly weaker candidates
  RetrievalIndex more = idx;
  more.clip_ids.push_back("0");
  more.video.conservativeResize(4, 5);
  more.text.conservativeResize(4, 5);
  more.video.row(3) = -q.transpose();
  more.text.row(3) = -q.transpose();
  CHECK(retrieve_topk(q, more, 1)[0].first == "b");
}

TEST_CASE("training: zero steps leaves parameters untouched, descent otherwise") {
  synthetic::LatentRetrievalConfig lc;
  lc.actions = 20;
  lc.latent_dim = 4;
  lc.feature_dim = 8;
  lc.train_draws = 2;
  const auto task = synthetic::make_latent_retrieval_task(lc);
  CrossViewEncoder enc({1, 8, 2, 4}, 1);
  auto text = TextEncoderAdapter::lookup(8, task.text_table);
  const auto before = enc.params().items()[0].second.value();
  RetrievalTrainingConfig cfg;
  cfg.epochs = 0;
  cfg.lr = 1e-2;
  cfg.batch_size = 8;
  const auto none = train_retrieval(enc, text, task.train, cfg, LossConfig{});
  CHECK(none.steps == 0);
  CHECK(enc.params().items()[0].second.value() == before);

  cfg.epochs = 40;
  cfg.seed = 2;
  const auto res = train_retrieval(enc, text, task.train, cfg, LossConfig{});
  REQUIRE(res.loss_trace.size() >= 40);
  auto mean = [](auto b, auto e) { return std::accumulate(b, e, 0.0) / static_cast<double>(std::distance(b, e)); };
  CHECK(mean(res.loss_trace.end() - 20, res.loss_trace.end()) < mean(res.loss_trace.begin(), res.loss_trace.begin() + 20));

  CHECK_THROWS_AS(train_retrieval(enc, text, std::span<const TrainingSample>{}, cfg, LossConfig{}), ValidationError);
}

TEST_CASE("training is deterministic for a seed") {
  synthetic::LatentRetrievalConfig lc;
  lc.actions = 10;
  lc.latent_dim = 4;
  lc.feature_dim = 8;
  const auto task = synthetic::make_latent_retrieval_task(lc);
  RetrievalTrainingConfig cfg;
  cfg.epochs = 3;
  cfg.lr = 1e-3;
  cfg.batch_size = 7;
  cfg.seed = 9;
  auto run = [&] {
    CrossViewEncoder enc({1, 8, 2, 4}, 4);
    auto text = TextEncoderAdapter::hashed(8, 32, 5);
    return train_retrieval(enc, text, task.train, cfg, LossConfig{}).loss_trace;
  };
  CHECK(run() == run());
}
