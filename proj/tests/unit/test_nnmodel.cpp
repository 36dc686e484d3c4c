// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "ltrsum/errors.hpp"
#include "ltrsum/nnmodel.hpp"
#include "ltrsum/rng.hpp"

using namespace ltrsum;

namespace {

ModelConfig micro_config() {
  ModelConfig cfg;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.n_layers = 1;
  cfg.ffn_mult = 2;
  cfg.vocab_size = 12;
  cfg.max_positions = 16;
  cfg.seed = 42;
  return cfg;
}

Segment make_segment(Rng& rng, int index, int window, int vocab, int query_len = 2) {
  Segment seg;
  seg.index = index;
  seg.framed_tokens.push_back(Vocab::kBos);
  for (int i = 0; i < query_len; ++i)
    seg.framed_tokens.push_back(rng.uniform_int(Vocab::kNumReserved, vocab - 1));
  seg.framed_tokens.push_back(Vocab::kSep);
  for (int i = 0; i < window; ++i)
    seg.framed_tokens.push_back(rng.uniform_int(Vocab::kNumReserved, vocab - 1));
  seg.source_start = index * window;
  seg.source_end = seg.source_start + window;
  return seg;
}

Model::DocBatch micro_batch(uint64_t seed, int n_segments = 2, int window = 5) {
  Rng rng(seed);
  Model::DocBatch batch;
  for (int i = 0; i < n_segments; ++i)
    batch.segments.push_back(make_segment(rng, i, window, 12));
  batch.summary = {6, 7, 8};
  batch.ranking_target.assign(static_cast<size_t>(n_segments), 0.0);
  batch.ranking_target[0] = 2.0;
  if (n_segments > 1) batch.ranking_target[1] = 1.0;
  return batch;
}

}  // namespace

TEST_CASE("encoder output shape follows segment and model dims") {
  ModelConfig cfg = micro_config();
  cfg.d_model = 32;
  cfg.n_heads = 2;
  Model model(cfg);
  Rng rng(1);
  const std::vector<Segment> segs{make_segment(rng, 0, 1, 12)};  // framed length 5
  ad::Tape tape;
  const auto enc = model.encode_segments(tape, segs);
  CHECK(enc.padded_len == 5);
  const Mat& v = tape.value(enc.segments[0]);
  CHECK(v.rows == 5);
  CHECK(v.cols == 32);
}

TEST_CASE("identical segments encode identically; batch order permutes outputs") {
  Model model(micro_config());
  Rng rng(2);
  const Segment a = make_segment(rng, 0, 5, 12);
  const Segment b = make_segment(rng, 1, 5, 12);
  Segment a_copy = a;
  a_copy.index = 2;

  ad::Tape tape;
  const auto enc = model.encode_segments(tape, {a, b, a_copy});
  const Mat& va = tape.value(enc.segments[0]);
  const Mat& vb = tape.value(enc.segments[1]);
  const Mat& va2 = tape.value(enc.segments[2]);
  CHECK(va.data == va2.data);

  // permuting the batch permutes outputs identically (no cross-segment leakage)
  ad::Tape tape2;
  const auto enc2 = model.encode_segments(tape2, {b, a});
  CHECK(tape2.value(enc2.segments[1]).data == va.data);
  CHECK(tape2.value(enc2.segments[0]).data == vb.data);
}

TEST_CASE("segment exceeding max_positions is a shape error") {
  Model model(micro_config());
  Rng rng(3);
  const Segment seg = make_segment(rng, 0, 14, 12);  // framed length 18 > 16
  ad::Tape tape;
  CHECK_THROWS_AS(model.encode_segments(tape, {seg}), ShapeError);
}

TEST_CASE("generation forward: shapes, attention normalization, causality") {
  Model model(micro_config());
  Rng rng(4);
  const std::vector<Segment> segs{make_segment(rng, 0, 5, 12), make_segment(rng, 1, 4, 12)};

  ad::Tape tape;
  const auto enc = model.encode_segments(tape, segs);
  const std::vector<TokenId> prefix{Vocab::kBos, 6, 7};
  const auto gen = model.generation_forward(tape, enc, prefix);
  const Mat& logits = tape.value(gen.logits);
  CHECK(logits.rows == 3);  // teacher forcing yields one step per prefix token
  CHECK(logits.cols == 12);

  const Mat& attn = tape.value(gen.cross_attention);
  CHECK(attn.rows == 3);
  CHECK(attn.cols == 2 * enc.padded_len);
  for (int r = 0; r < attn.rows; ++r) {
    double sum = 0.0;
    for (int c = 0; c < attn.cols; ++c) sum += attn.at(r, c);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }

  // PAD columns carry no attention mass
  for (int r = 0; r < attn.rows; ++r)
    for (int j = enc.real_len[1]; j < enc.padded_len; ++j)
      CHECK(attn.at(r, enc.padded_len + j) == 0.0);

  // causality: extending the prefix must not change earlier logits
  ad::Tape tape2;
  const auto enc2 = model.encode_segments(tape2, segs);
  const auto gen2 = model.generation_forward(tape2, enc2, {Vocab::kBos, 6, 7, 9, 10});
  const Mat& logits2 = tape2.value(gen2.logits);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 12; ++c)
      CHECK(logits2.at(r, c) == doctest::Approx(logits.at(r, c)).epsilon(1e-12));
}

TEST_CASE("generation forward rejects malformed prefixes") {
  Model model(micro_config());
  Rng rng(5);
  const std::vector<Segment> segs{make_segment(rng, 0, 5, 12)};
  ad::Tape tape;
  const auto enc = model.encode_segments(tape, segs);
  CHECK_THROWS_AS(model.generation_forward(tape, enc, {}), ValidationError);
  CHECK_THROWS_AS(model.generation_forward(tape, enc, {6, 7}), ValidationError);
}

TEST_CASE("doubling PAD-only positions leaves logits unchanged") {
  Model model(micro_config());
  Rng rng(6);
  const std::vector<Segment> segs{make_segment(rng, 0, 5, 12), make_segment(rng, 1, 3, 12)};
  const std::vector<TokenId> prefix{Vocab::kBos, 6};

  ad::Tape tape;
  const auto enc = model.encode_segments(tape, segs);
  const auto gen = model.generation_forward(tape, enc, prefix);

  ad::Tape tape2;
  const auto enc2 = model.encode_segments(tape2, segs, /*min_padded_len=*/enc.padded_len + 4);
  const auto gen2 = model.generation_forward(tape2, enc2, prefix);

  const Mat& a = tape.value(gen.logits);
  const Mat& b = tape2.value(gen2.logits);
  REQUIRE(a.rows == b.rows);
  for (size_t i = 0; i < a.numel(); ++i)
    CHECK(a.data[i] == doctest::Approx(b.data[i]).epsilon(1e-9));
}

TEST_CASE("ltr forward: one score per segment, deterministic, non-degenerate") {
  Model model(micro_config());
  Rng rng(7);
  const std::vector<Segment> segs{make_segment(rng, 0, 5, 12), make_segment(rng, 1, 5, 12),
                                  make_segment(rng, 2, 5, 12)};
  const auto scores = model.ltr_scores(segs);
  REQUIRE(scores.size() == 3);
  const auto scores_again = model.ltr_scores(segs);
  CHECK(scores == scores_again);

  // identical segments score identically
  const auto dup = model.ltr_scores({segs[0], segs[0]});
  CHECK(dup[0] == dup[1]);

  // distinct random segments score differently across seeds
  int distinct = 0;
  for (uint64_t seed = 0; seed < 10; ++seed) {
    ModelConfig cfg = micro_config();
    cfg.seed = seed;
    Model fresh(cfg);
    Rng seg_rng(seed + 100);
    const auto s = fresh.ltr_scores(
        {make_segment(seg_rng, 0, 5, 12), make_segment(seg_rng, 1, 5, 12)});
    if (std::abs(s[0] - s[1]) > 1e-12) ++distinct;
  }
  CHECK(distinct == 10);
}

TEST_CASE("parameter sharing: decoder mutation changes both passes") {
  Model model(micro_config());
  Rng rng(8);
  const std::vector<Segment> segs{make_segment(rng, 0, 5, 12), make_segment(rng, 1, 5, 12)};
  const std::vector<TokenId> prefix{Vocab::kBos, 6};

  const ForwardTrace before = model.forward_trace(segs, prefix);
  // the decoder FFN sits on both forward paths; wq/wk would not reach the
  // LTR score in BOS mode (its one-key softmax is pinned at 1), and a
  // uniform perturbation is annihilated by layer-norm zero row sums
  ad::Param* w = model.find_parameter("dec.l0.ffn.w1");
  REQUIRE(w != nullptr);
  for (size_t i = 0; i < w->value.numel(); ++i)
    w->value.data[i] += 0.05 * static_cast<double>(i % 3 + 1);
  const ForwardTrace after = model.forward_trace(segs, prefix);

  double gen_delta = 0.0, ltr_delta = 0.0;
  for (size_t i = 0; i < before.generation_logits.numel(); ++i)
    gen_delta += std::abs(before.generation_logits.data[i] - after.generation_logits.data[i]);
  for (size_t i = 0; i < before.ltr_scores.size(); ++i)
    ltr_delta += std::abs(before.ltr_scores[i] - after.ltr_scores[i]);
  CHECK(gen_delta > 0.0);
  CHECK(ltr_delta > 0.0);

  // generation-side attention still depends on the query projection
  ad::Param* wq = model.find_parameter("dec.l0.cross.h0.wq");
  REQUIRE(wq != nullptr);
  for (size_t i = 0; i < wq->value.numel(); ++i)
    wq->value.data[i] += 0.05 * static_cast<double>(i % 3 + 1);
  const ForwardTrace after2 = model.forward_trace(segs, prefix);
  double gen_delta2 = 0.0;
  for (size_t i = 0; i < after.generation_logits.numel(); ++i)
    gen_delta2 += std::abs(after.generation_logits.data[i] - after2.generation_logits.data[i]);
  CHECK(gen_delta2 > 0.0);
}

TEST_CASE("lambda zero backward equals generation-only gradients exactly") {
  ModelConfig cfg = micro_config();
  Model model(cfg);
  const auto batch = micro_batch(9);

  model.zero_grads();
  model.backward(batch, 0.0);
  std::vector<std::vector<double>> grads_lambda0;
  for (const auto* p : model.parameters()) grads_lambda0.push_back(p->grad.data);

  Model::DocBatch gen_only = batch;
  gen_only.ranking_target.assign(gen_only.ranking_target.size(), 0.0);  // skip rule
  model.zero_grads();
  model.backward(gen_only, 1.0);
  size_t idx = 0;
  for (const auto* p : model.parameters()) {
    CHECK(p->grad.data == grads_lambda0[idx]);
    ++idx;
  }
}

TEST_CASE("full-model gradient check on the micro configuration") {
  for (double lambda : {0.0, 1.0}) {
    CAPTURE(lambda);
    ModelConfig cfg = micro_config();
    Model model(cfg);
    const auto batch = micro_batch(10, /*n_segments=*/2, /*window=*/4);

    model.zero_grads();
    const auto lb = model.backward(batch, lambda);
    CHECK(std::isfinite(lb.joint));

    const double h = 1e-4;
    for (ad::Param* p : model.parameters()) {
      CAPTURE(p->name);
      double worst = 0.0;
      for (size_t i = 0; i < p->value.numel(); ++i) {
        const double saved = p->value.data[i];
        p->value.data[i] = saved + h;
        const double up = model.compute_loss(batch, lambda).joint;
        p->value.data[i] = saved - h;
        const double down = model.compute_loss(batch, lambda).joint;
        p->value.data[i] = saved;
        const double fd = (up - down) / (2 * h);
        const double got = p->grad.data[i];
        const double rel = std::abs(fd - got) / std::max({1.0, std::abs(fd), std::abs(got)});
        worst = std::max(worst, rel);
      }
      CHECK(worst <= 1e-3);
    }
  }
}

TEST_CASE("greedy decode stops at SEP and respects max_len") {
  Model model(micro_config());
  Rng rng(11);
  const std::vector<Segment> segs{make_segment(rng, 0, 5, 12)};
  const auto out = model.greedy_decode(segs, 4);
  CHECK(out.size() <= 4);
  for (TokenId t : out) CHECK(t != Vocab::kSep);
}

TEST_CASE("untied head changes only the ltr pass") {
  ModelConfig cfg = micro_config();
  cfg.untied_ltr_head = true;
  Model model(cfg);
  Rng rng(12);
  const std::vector<Segment> segs{make_segment(rng, 0, 5, 12), make_segment(rng, 1, 5, 12)};

  CHECK(model.find_parameter("ltr_head.w1") != nullptr);
  const auto before = model.ltr_scores(segs);
  ad::Param* w = model.find_parameter("ltr_head.w2");
  for (double& v : w->value.data) v += 0.05;
  const auto after = model.ltr_scores(segs);
  CHECK(before != after);

  // generation path unaffected by the untied head
  const ForwardTrace t1 = model.forward_trace(segs, {Vocab::kBos, 6});
  for (double& v : w->value.data) v -= 0.05;
  const ForwardTrace t2 = model.forward_trace(segs, {Vocab::kBos, 6});
  CHECK(t1.generation_logits.data == t2.generation_logits.data);
}

TEST_CASE("full-segment ltr attention mode runs and differs from BOS mode") {
  ModelConfig bos_cfg = micro_config();
  ModelConfig full_cfg = micro_config();
  full_cfg.ltr_full_segment = true;
  Model bos_model(bos_cfg);
  Model full_model(full_cfg);
  Rng rng(13);
  const std::vector<Segment> segs{make_segment(rng, 0, 6, 12), make_segment(rng, 1, 6, 12)};
  const auto a = bos_model.ltr_scores(segs);
  const auto b = full_model.ltr_scores(segs);
  REQUIRE(a.size() == b.size());
  bool differs = false;
  for (size_t i = 0; i < a.size(); ++i)
    if (std::abs(a[i] - b[i]) > 1e-12) differs = true;
  CHECK(differs);
}
