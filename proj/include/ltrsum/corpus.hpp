// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace ltrsum {

using TokenId = int32_t;

// Whitespace vocabulary with five reserved ids at the front. Reserved
// tokens are never produced by tokenize(); UNK absorbs unseen words.
class Vocab {
 public:
  static constexpr TokenId kBos = 0;    // <s>
  static constexpr TokenId kSep = 1;    // </s>
  static constexpr TokenId kPad = 2;    // <pad>
  static constexpr TokenId kUnk = 3;    // <unk>
  static constexpr TokenId kExtra = 4;  // <extra_token>, ranking logit slot
  static constexpr int kNumReserved = 5;

  Vocab();
  explicit Vocab(const std::vector<std::string>& words);

  // Adds a word if unseen; returns its id either way.
  TokenId add(const std::string& word);

  // Id for a word, or kUnk when absent.
  TokenId id_of(const std::string& word) const;
  const std::string& token_of(TokenId id) const;

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool is_reserved(TokenId id) const { return id >= 0 && id < kNumReserved; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

// A source span asserted to support the reference summary with
// confidence `probability`. Offsets are token indices into the source.
struct SpanAlignment {
  int source_start = 0;
  int span_len = 1;
  double probability = 0.0;
};

struct Document {
  std::string doc_id;
  std::vector<TokenId> query;
  std::vector<TokenId> source;
  std::optional<std::vector<TokenId>> reference_summary;
  std::optional<std::vector<SpanAlignment>> alignments;
};

struct Corpus {
  Vocab vocab;
  std::vector<Document> docs;
};

std::vector<TokenId> tokenize(const std::string& text, const Vocab& vocab);

// Splits on whitespace without touching the vocabulary.
std::vector<std::string> split_words(const std::string& text);

std::string detokenize(const std::vector<TokenId>& ids, const Vocab& vocab);

// Reads a JSONL corpus file, building the vocabulary from the file
// contents in first-occurrence order. Throws ParseError with the line
// number on malformed input.
Corpus load_corpus(const std::string& path);

// Reads a JSONL corpus against a fixed vocabulary (e.g. from a
// checkpoint); unseen words map to UNK.
std::vector<Document> load_corpus_with_vocab(const std::string& path, const Vocab& vocab);

// Writes documents back to JSONL, one object per line.
void save_corpus(const std::string& path, const Corpus& corpus);
std::string corpus_to_jsonl(const Corpus& corpus);

struct SynthConfig {
  int doc_len = 144;         // source tokens per document
  int gold_regions = 2;      // planted regions overlapping the summary
  int gold_len_min = 8;      // per-document region length bounds
  int gold_len_max = 20;
  int stride_hint = 24;      // placement grid; regions never straddle it
  int topic_words = 3;       // distinct summary words per region
  int content_words = 96;    // filler vocabulary size
  int salient_words = 32;    // summary-bearing vocabulary size
  int query_len = 4;
  int distractor_spans = 2;  // low-probability noise alignments
};

// Plants `gold_regions` contiguous spans of summary-bearing tokens per
// document, with alignment probabilities in [0.6, 1.0]; distractor spans
// stay below 0.4 so the default threshold separates them.
Corpus generate_synthetic(uint64_t seed, int n_docs, const SynthConfig& cfg = {});

}  // namespace ltrsum
