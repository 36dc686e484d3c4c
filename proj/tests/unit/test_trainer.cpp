// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "ltrsum/rng.hpp"

#include "ltrsum/errors.hpp"
#include "ltrsum/eval.hpp"
#include "ltrsum/trainer.hpp"
#include "test_util.hpp"

using namespace ltrsum;

namespace {

// small corpus/model/config so trainer tests stay fast
SynthConfig tiny_synth() {
  SynthConfig cfg;
  cfg.doc_len = 72;
  cfg.gold_regions = 2;
  cfg.gold_len_min = 6;
  cfg.gold_len_max = 10;
  cfg.stride_hint = 12;
  cfg.content_words = 30;
  cfg.salient_words = 12;
  return cfg;
}

TrainConfig tiny_train(int epochs = 2) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 4;
  cfg.eval_every = 1;
  cfg.seed = 3;
  cfg.segmentation.window_len = 24;
  cfg.segmentation.stride = 12;
  cfg.decode_max_len = 8;
  return cfg;
}

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.max_positions = 64;
  cfg.seed = 1;
  return cfg;
}

std::vector<double> flatten_params(const Model& model) {
  std::vector<double> out;
  for (const auto* p : model.parameters())
    out.insert(out.end(), p->value.data.begin(), p->value.data.end());
  return out;
}

}  // namespace

TEST_CASE("heldout split is deterministic and sized by fraction") {
  const Corpus corpus = generate_synthetic(1, 20, tiny_synth());
  const auto a = heldout_split(corpus.docs, 0.2);
  const auto b = heldout_split(corpus.docs, 0.2);
  CHECK(a == b);
  CHECK(a.size() == 4);
  CHECK(heldout_split(corpus.docs, 0.0).empty());
}

TEST_CASE("trainer rejects documents without summaries") {
  Corpus corpus = generate_synthetic(1, 4, tiny_synth());
  corpus.docs[2].reference_summary.reset();
  CHECK_THROWS_WITH_AS(Trainer(std::move(corpus), tiny_model(), tiny_train()),
                       doctest::Contains("doc0002"), ValidationError);
}

TEST_CASE("trainer rejects empty corpora and bad configs") {
  CHECK_THROWS_AS(Trainer(Corpus{}, tiny_model(), tiny_train()), ValidationError);
  TrainConfig bad = tiny_train();
  bad.epochs = 0;
  CHECK_THROWS_AS(Trainer(generate_synthetic(1, 4, tiny_synth()), tiny_model(), bad), ConfigError);
  bad = tiny_train();
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(Trainer(generate_synthetic(1, 4, tiny_synth()), tiny_model(), bad), ConfigError);
}

TEST_CASE("epoch step bookkeeping and loss finiteness") {
  const Corpus corpus = generate_synthetic(2, 8, tiny_synth());
  Trainer trainer(corpus, tiny_model(), tiny_train(1));
  const TrainReport report = trainer.run();
  REQUIRE(report.epochs.size() == 1);
  CHECK(report.train_docs + report.heldout_docs == 8);
  CHECK(std::isfinite(report.epochs[0].gen_loss));
  CHECK(std::isfinite(report.epochs[0].joint_loss));
  // lambda-linearity of the logged means
  const auto& em = report.epochs[0];
  CHECK(em.joint_loss ==
        doctest::Approx(em.gen_loss + tiny_train().lambda * em.ltr_loss).epsilon(1e-9));
  // one update per ceil(train_docs / batch) mini-batch
  const int expected_steps =
      (report.train_docs + tiny_train().batch_size - 1) / tiny_train().batch_size;
  CHECK(trainer.state().step == expected_steps);
}

TEST_CASE("one epoch on a two-doc corpus runs exactly one step") {
  Corpus corpus = generate_synthetic(2, 2, tiny_synth());
  TrainConfig cfg = tiny_train(1);
  cfg.batch_size = 8;
  cfg.eval_fraction = 0.0;  // keep both docs in training
  Trainer trainer(corpus, tiny_model(), cfg);
  trainer.run();
  CHECK(trainer.state().step == 1);
}

TEST_CASE("identical runs produce identical reports and parameters") {
  const Corpus corpus = generate_synthetic(3, 8, tiny_synth());
  Trainer t1(corpus, tiny_model(), tiny_train());
  Trainer t2(corpus, tiny_model(), tiny_train());
  const TrainReport r1 = t1.run();
  const TrainReport r2 = t2.run();
  CHECK(r1.metrics_jsonl() == r2.metrics_jsonl());
  CHECK(flatten_params(t1.model()) == flatten_params(t2.model()));
}

TEST_CASE("lambda zero trajectory equals generation-only trainer") {
  const Corpus corpus = generate_synthetic(4, 8, tiny_synth());
  TrainConfig lam0 = tiny_train();
  lam0.lambda = 0.0;
  Trainer a(corpus, tiny_model(), lam0);
  const TrainReport ra = a.run();

  // generation-only mode is the same code path with lambda pinned to zero
  TrainConfig gen_only = tiny_train();
  gen_only.lambda = 0.0;
  Trainer b(corpus, tiny_model(), gen_only);
  const TrainReport rb = b.run();

  CHECK(ra.metrics_jsonl() == rb.metrics_jsonl());
  CHECK(flatten_params(a.model()) == flatten_params(b.model()));

  // and it differs from a lambda=1 run on the ranking side
  Trainer c(corpus, tiny_model(), tiny_train());
  c.run();
  CHECK(flatten_params(a.model()) != flatten_params(c.model()));
}

TEST_CASE("checkpoint resume continues the exact trajectory") {
  const Corpus corpus = generate_synthetic(5, 8, tiny_synth());

  // two epochs continuously
  TrainConfig two = tiny_train(2);
  Trainer continuous(corpus, tiny_model(), two);
  continuous.run();

  // one epoch, save, load, one more epoch
  TrainConfig one = tiny_train(1);
  Trainer first(corpus, tiny_model(), one);
  first.run();
  const auto path = testutil::temp_path("resume.bin");
  save_checkpoint(path, first.model(), first.vocab(), first.state());

  LoadedCheckpoint loaded = load_checkpoint(path);
  CHECK(loaded.state.epochs_completed == 1);
  Trainer resumed(corpus, std::move(loaded), two);
  const TrainReport rr = resumed.run();
  REQUIRE(rr.epochs.size() == 1);  // only epoch 2 ran
  CHECK(rr.epochs[0].epoch == 2);

  CHECK(flatten_params(continuous.model()) == flatten_params(resumed.model()));
}

TEST_CASE("worker sharding is deterministic per worker count") {
  const Corpus corpus = generate_synthetic(6, 8, tiny_synth());
  TrainConfig w2 = tiny_train();
  w2.workers = 2;
  Trainer a(corpus, tiny_model(), w2);
  Trainer b(corpus, tiny_model(), w2);
  a.run();
  b.run();
  CHECK(flatten_params(a.model()) == flatten_params(b.model()));
}

TEST_CASE("divergence aborts naming the last good checkpoint") {
  const Corpus corpus = generate_synthetic(12, 6, tiny_synth());
  TrainConfig cfg = tiny_train(4);
  cfg.optimizer = "sgd";
  cfg.learning_rate = 1e12;  // guaranteed blow-up
  cfg.clip_norm = 0.0;
  cfg.checkpoint_out = testutil::temp_path("diverge.bin");
  Trainer trainer(corpus, tiny_model(), cfg);
  CHECK_THROWS_WITH_AS(trainer.run(), doctest::Contains("diverge.bin"), RuntimeFailure);

  TrainConfig no_ckpt = cfg;
  no_ckpt.checkpoint_out.clear();
  Trainer trainer2(corpus, tiny_model(), no_ckpt);
  CHECK_THROWS_WITH_AS(trainer2.run(), doctest::Contains("no checkpoint"), RuntimeFailure);
}

TEST_CASE("sgd optimizer path runs") {
  const Corpus corpus = generate_synthetic(7, 6, tiny_synth());
  TrainConfig cfg = tiny_train(1);
  cfg.optimizer = "sgd";
  cfg.learning_rate = 0.05;
  Trainer trainer(corpus, tiny_model(), cfg);
  const TrainReport report = trainer.run();
  CHECK(std::isfinite(report.epochs[0].joint_loss));
}

TEST_CASE("evaluate_model: perfect scores give nDCG 1, empty set errors") {
  const Corpus corpus = generate_synthetic(8, 6, tiny_synth());
  TrainConfig cfg = tiny_train(1);
  Trainer trainer(corpus, tiny_model(), cfg);

  CHECK_THROWS_AS(evaluate_model(trainer.model(), {}, cfg), ValidationError);

  const EvalReport report = evaluate_model(trainer.model(), corpus.docs, cfg);
  CHECK(report.ndcg_docs == 6);
  CHECK(report.mean_ndcg_ltr >= 0.0);
  CHECK(report.mean_ndcg_ltr <= 1.0);

  // injected perfect ranking: sorting gold labels descending gives 1.0
  for (const auto& doc : corpus.docs) {
    const auto segs = segment_document(doc, cfg.segmentation);
    const auto labels = label_document(doc, segs, cfg.threshold);
    if (labels.all_zero()) continue;
    std::vector<double> oracle_scores(labels.labels.begin(), labels.labels.end());
    const RankedList perfect = rank_by_scores(oracle_scores);
    const int k = std::min(cfg.ndcg_k, static_cast<int>(segs.size()));
    CHECK(ndcg(perfect, labels.labels, k) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("untrained model scores near the random-permutation baseline") {
  const Corpus corpus = generate_synthetic(9, 12, tiny_synth());
  TrainConfig cfg = tiny_train(1);
  ModelConfig mcfg = tiny_model();
  mcfg.vocab_size = corpus.vocab.size();
  Model model(mcfg);  // untrained

  // Monte-Carlo band for the mean nDCG of uniformly random orders
  Rng rng(1234);
  std::vector<double> mc_means;
  const int reps = 300;
  std::vector<std::pair<std::vector<int>, int>> docs_labels;
  for (const auto& doc : corpus.docs) {
    const auto segs = segment_document(doc, cfg.segmentation);
    const auto labels = label_document(doc, segs, cfg.threshold);
    if (!labels.all_zero())
      docs_labels.emplace_back(labels.labels,
                               std::min(cfg.ndcg_k, static_cast<int>(segs.size())));
  }
  REQUIRE(!docs_labels.empty());
  for (int rep = 0; rep < reps; ++rep) {
    double sum = 0.0;
    for (const auto& [labels, k] : docs_labels) {
      std::vector<int> order(labels.size());
      std::iota(order.begin(), order.end(), 0);
      rng.shuffle(order);
      sum += ndcg({order, std::vector<double>(labels.size(), 0.0)}, labels, k);
    }
    mc_means.push_back(sum / static_cast<double>(docs_labels.size()));
  }
  std::sort(mc_means.begin(), mc_means.end());
  const double lo = mc_means[static_cast<size_t>(0.025 * reps)];
  const double hi = mc_means[static_cast<size_t>(0.975 * reps) - 1];

  const EvalReport report = evaluate_model(model, corpus.docs, cfg);
  // allow a hair of slack around the empirical band
  CHECK(report.mean_ndcg_ltr >= lo - 0.1);
  CHECK(report.mean_ndcg_ltr <= hi + 0.1);
}

TEST_CASE("training reduces the joint loss on the tiny corpus") {
  const Corpus corpus = generate_synthetic(10, 16, tiny_synth());
  TrainConfig cfg = tiny_train(6);
  cfg.eval_every = 6;
  Trainer trainer(corpus, tiny_model(), cfg);
  const TrainReport report = trainer.run();
  CHECK(report.epochs.back().joint_loss < report.epochs.front().joint_loss);
}
