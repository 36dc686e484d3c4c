// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>

#include "ltrsum/corpus.hpp"
#include "ltrsum/errors.hpp"
#include "test_util.hpp"

using namespace ltrsum;

TEST_CASE("vocab reserves five distinct ids below size") {
  Vocab v;
  const TokenId ids[] = {Vocab::kBos, Vocab::kSep, Vocab::kPad, Vocab::kUnk, Vocab::kExtra};
  for (TokenId id : ids) CHECK(id < v.size());
  for (int i = 0; i < 5; ++i)
    for (int j = i + 1; j < 5; ++j) CHECK(ids[i] != ids[j]);
}

TEST_CASE("vocab round-trips every non-UNK token") {
  Vocab v({"alpha", "beta", "gamma"});
  for (TokenId id = 0; id < v.size(); ++id) {
    if (id == Vocab::kUnk) continue;
    if (v.is_reserved(id)) continue;  // reserved spellings fold to UNK via tokenize
    CHECK(v.id_of(v.token_of(id)) == id);
  }
  CHECK(v.id_of("unseen-word") == Vocab::kUnk);
}

TEST_CASE("tokenize basics") {
  Vocab v({"a", "b"});
  CHECK(tokenize("", v).empty());
  CHECK(tokenize("a a b", v) == std::vector<TokenId>{v.id_of("a"), v.id_of("a"), v.id_of("b")});
  CHECK(tokenize("a zzz", v) == std::vector<TokenId>{v.id_of("a"), Vocab::kUnk});
}

TEST_CASE("tokenize never emits reserved ids") {
  Vocab v({"x"});
  const auto ids = tokenize("<s> </s> <pad> <extra_token> x", v);
  for (size_t i = 0; i + 1 < ids.size(); ++i) CHECK(ids[i] == Vocab::kUnk);
  CHECK(ids.back() == v.id_of("x"));
}

TEST_CASE("load_corpus: empty file gives empty corpus") {
  const auto path = testutil::write_file("empty.jsonl", "");
  CHECK(load_corpus(path).docs.empty());
}

TEST_CASE("load_corpus: single line round trip") {
  const auto path = testutil::write_file(
      "one.jsonl", R"({"doc_id":"d1","query":"q","source":"a b"})" "\n");
  const Corpus c = load_corpus(path);
  REQUIRE(c.docs.size() == 1);
  CHECK(c.docs[0].source.size() == 2);
  CHECK(c.docs[0].query.size() == 1);
  CHECK_FALSE(c.docs[0].reference_summary.has_value());
}

TEST_CASE("load_corpus: error names the offending line") {
  const auto path = testutil::write_file(
      "bad.jsonl",
      R"({"doc_id":"d1","query":"q","source":"a"})" "\n"
      R"({"doc_id":"d2","source":"a"})" "\n");
  CHECK_THROWS_WITH_AS(load_corpus(path), doctest::Contains("line 2"), ParseError);
}

TEST_CASE("load_corpus: malformed json reports line") {
  const auto path = testutil::write_file("notjson.jsonl", "{oops\n");
  CHECK_THROWS_WITH_AS(load_corpus(path), doctest::Contains("line 1"), ParseError);
}

TEST_CASE("load_corpus: alignment bounds validated") {
  const auto path = testutil::write_file(
      "align.jsonl",
      R"({"doc_id":"d","query":"q","source":"a b","alignments":[{"start":1,"len":5,"p":0.5}]})"
      "\n");
  CHECK_THROWS_AS(load_corpus(path), ParseError);
}

TEST_CASE("corpus serialization round trip preserves content") {
  const Corpus corpus = generate_synthetic(7, 3);
  const auto path = testutil::write_file("roundtrip.jsonl", corpus_to_jsonl(corpus));
  const Corpus reloaded = load_corpus(path);
  REQUIRE(reloaded.docs.size() == corpus.docs.size());
  for (size_t i = 0; i < corpus.docs.size(); ++i) {
    const auto& a = corpus.docs[i];
    const auto& b = reloaded.docs[i];
    CHECK(a.doc_id == b.doc_id);
    CHECK(detokenize(a.source, corpus.vocab) == detokenize(b.source, reloaded.vocab));
    CHECK(detokenize(a.query, corpus.vocab) == detokenize(b.query, reloaded.vocab));
    REQUIRE(a.alignments.has_value());
    REQUIRE(b.alignments.has_value());
    CHECK(a.alignments->size() == b.alignments->size());
  }
}

TEST_CASE("generate_synthetic: zero docs") {
  CHECK(generate_synthetic(1, 0).docs.empty());
}

TEST_CASE("generate_synthetic: determinism is byte equal") {
  const Corpus a = generate_synthetic(1, 6);
  const Corpus b = generate_synthetic(1, 6);
  CHECK(corpus_to_jsonl(a) == corpus_to_jsonl(b));
}

TEST_CASE("generate_synthetic: gold alignments carry p >= 0.6") {
  SynthConfig cfg;
  cfg.gold_regions = 2;
  const Corpus c = generate_synthetic(1, 4, cfg);
  REQUIRE(c.docs.size() == 4);
  for (const auto& doc : c.docs) {
    REQUIRE(doc.alignments.has_value());
    int gold = 0;
    for (const auto& a : *doc.alignments) {
      if (a.probability >= 0.6) ++gold;
      else CHECK(a.probability < 0.4);
    }
    CHECK(gold == 2);
    REQUIRE(doc.reference_summary.has_value());
    // planted regions overlap the summary vocabulary
    for (const auto& a : *doc.alignments) {
      if (a.probability < 0.6) continue;
      bool overlap = false;
      for (int i = a.source_start; i < a.source_start + a.span_len; ++i) {
        const TokenId tok = doc.source[static_cast<size_t>(i)];
        if (std::find(doc.reference_summary->begin(), doc.reference_summary->end(), tok) !=
            doc.reference_summary->end()) {
          overlap = true;
          break;
        }
      }
      CHECK(overlap);
    }
  }
}

TEST_CASE("generate_synthetic: infeasible config rejected") {
  SynthConfig cfg;
  cfg.doc_len = 30;
  cfg.gold_regions = 4;  // only one full cell fits
  CHECK_THROWS_AS(generate_synthetic(1, 1, cfg), ConfigError);
}
