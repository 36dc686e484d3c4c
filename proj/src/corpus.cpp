// SPDX-License-Identifier: Apache-2.0
#include "ltrsum/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ltrsum/errors.hpp"
#include "ltrsum/rng.hpp"

using nlohmann::json;

namespace ltrsum {

namespace {
const char* kReservedSpellings[Vocab::kNumReserved] = {
    "<s>", "</s>", "<pad>", "<unk>", "<extra_token>"};
}

Vocab::Vocab() {
  for (const char* spelling : kReservedSpellings) {
    tokens_.emplace_back(spelling);
  }
}

Vocab::Vocab(const std::vector<std::string>& words) : Vocab() {
  for (const auto& w : words) add(w);
}

TokenId Vocab::add(const std::string& word) {
  for (int r = 0; r < kNumReserved; ++r) {
    if (word == kReservedSpellings[r]) return static_cast<TokenId>(r);
  }
  auto it = index_.find(word);
  if (it != index_.end()) return it->second;
  const TokenId id = static_cast<TokenId>(tokens_.size());
  tokens_.push_back(word);
  index_.emplace(word, id);
  return id;
}

TokenId Vocab::id_of(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocab::token_of(TokenId id) const {
  if (id < 0 || id >= size()) throw ValidationError("token id out of range: " + std::to_string(id));
  return tokens_[static_cast<size_t>(id)];
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream in(text);
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

std::vector<TokenId> tokenize(const std::string& text, const Vocab& vocab) {
  std::vector<TokenId> ids;
  for (const auto& w : split_words(text)) {
    const TokenId id = vocab.id_of(w);
    // plain text never yields a reserved id; reserved spellings fold to UNK
    ids.push_back(vocab.is_reserved(id) ? Vocab::kUnk : id);
  }
  return ids;
}

std::string detokenize(const std::vector<TokenId>& ids, const Vocab& vocab) {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) out += ' ';
    out += vocab.token_of(ids[i]);
  }
  return out;
}

namespace {

void validate_document(const Document& doc, int vocab_size, int line_no) {
  const std::string where = "line " + std::to_string(line_no) + " (doc_id '" + doc.doc_id + "')";
  if (doc.query.empty()) throw ParseError(where + ": query must be non-empty");
  if (doc.source.empty()) throw ParseError(where + ": source must be non-empty");
  auto check_ids = [&](const std::vector<TokenId>& ids, const char* field) {
    for (TokenId id : ids) {
      if (id < 0 || id >= vocab_size)
        throw ValidationError(where + ": token id out of range in " + field);
    }
  };
  check_ids(doc.query, "query");
  check_ids(doc.source, "source");
  if (doc.reference_summary) check_ids(*doc.reference_summary, "summary");
  if (doc.alignments) {
    const int n = static_cast<int>(doc.source.size());
    for (const auto& a : *doc.alignments) {
      if (a.span_len < 1) throw ParseError(where + ": alignment span_len must be >= 1");
      if (a.source_start < 0 || a.source_start + a.span_len > n)
        throw ParseError(where + ": alignment span exceeds source length");
      if (a.probability < 0.0 || a.probability > 1.0)
        throw ParseError(where + ": alignment probability outside [0, 1]");
    }
  }
}

Document parse_line(const std::string& line, int line_no, const Vocab& vocab) {
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError("line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
  }
  auto require_string = [&](const char* field) -> std::string {
    if (!obj.contains(field) || !obj[field].is_string())
      throw ParseError("line " + std::to_string(line_no) + ": missing or non-string field \"" +
                       field + "\"");
    return obj[field].get<std::string>();
  };
  Document doc;
  doc.doc_id = require_string("doc_id");
  doc.query = tokenize(require_string("query"), vocab);
  doc.source = tokenize(require_string("source"), vocab);
  if (obj.contains("summary")) {
    if (!obj["summary"].is_string())
      throw ParseError("line " + std::to_string(line_no) + ": non-string field \"summary\"");
    doc.reference_summary = tokenize(obj["summary"].get<std::string>(), vocab);
  }
  if (obj.contains("alignments")) {
    if (!obj["alignments"].is_array())
      throw ParseError("line " + std::to_string(line_no) + ": \"alignments\" must be an array");
    std::vector<SpanAlignment> spans;
    for (const auto& ja : obj["alignments"]) {
      if (!ja.is_object() || !ja.contains("start") || !ja.contains("len") || !ja.contains("p"))
        throw ParseError("line " + std::to_string(line_no) +
                         ": alignment entries need {start, len, p}");
      SpanAlignment a;
      a.source_start = ja["start"].get<int>();
      a.span_len = ja["len"].get<int>();
      a.probability = ja["p"].get<double>();
      spans.push_back(a);
    }
    doc.alignments = std::move(spans);
  }
  validate_document(doc, vocab.size(), line_no);
  return doc;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open corpus file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

bool is_blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

Corpus load_corpus(const std::string& path) {
  const auto lines = read_lines(path);
  Corpus corpus;
  // first pass builds the vocabulary in first-occurrence order so the
  // id assignment depends only on file contents
  for (size_t i = 0; i < lines.size(); ++i) {
    if (is_blank(lines[i])) continue;
    json obj;
    try {
      obj = json::parse(lines[i]);
    } catch (const json::parse_error& e) {
      throw ParseError("line " + std::to_string(i + 1) + ": invalid JSON: " + e.what());
    }
    for (const char* field : {"query", "source", "summary"}) {
      if (obj.contains(field) && obj[field].is_string()) {
        for (const auto& w : split_words(obj[field].get<std::string>())) corpus.vocab.add(w);
      }
    }
  }
  for (size_t i = 0; i < lines.size(); ++i) {
    if (is_blank(lines[i])) continue;
    corpus.docs.push_back(parse_line(lines[i], static_cast<int>(i + 1), corpus.vocab));
  }
  return corpus;
}

std::vector<Document> load_corpus_with_vocab(const std::string& path, const Vocab& vocab) {
  const auto lines = read_lines(path);
  std::vector<Document> docs;
  for (size_t i = 0; i < lines.size(); ++i) {
    if (is_blank(lines[i])) continue;
    docs.push_back(parse_line(lines[i], static_cast<int>(i + 1), vocab));
  }
  return docs;
}

std::string corpus_to_jsonl(const Corpus& corpus) {
  std::string out;
  for (const auto& doc : corpus.docs) {
    json obj;
    obj["doc_id"] = doc.doc_id;
    obj["query"] = detokenize(doc.query, corpus.vocab);
    obj["source"] = detokenize(doc.source, corpus.vocab);
    if (doc.reference_summary) obj["summary"] = detokenize(*doc.reference_summary, corpus.vocab);
    if (doc.alignments) {
      json spans = json::array();
      for (const auto& a : *doc.alignments) {
        spans.push_back({{"start", a.source_start}, {"len", a.span_len}, {"p", a.probability}});
      }
      obj["alignments"] = std::move(spans);
    }
    out += obj.dump();
    out += '\n';
  }
  return out;
}

void save_corpus(const std::string& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write corpus file: " + path);
  out << corpus_to_jsonl(corpus);
}

namespace {

// Round so that equal probabilities always yield equal salient counts.
int salient_count(double p, int len) { return static_cast<int>(std::lround(p * len)); }

}  // namespace

Corpus generate_synthetic(uint64_t seed, int n_docs, const SynthConfig& cfg) {
  if (n_docs < 0) throw ConfigError("n_docs must be >= 0");
  if (cfg.gold_regions < 1) throw ConfigError("gold_regions must be >= 1");
  if (cfg.gold_len_min < 1 || cfg.gold_len_min > cfg.gold_len_max)
    throw ConfigError("gold length bounds invalid");
  if (cfg.stride_hint < 1 || cfg.gold_len_max > cfg.stride_hint)
    throw ConfigError("gold regions must fit within the stride_hint grid");
  if (cfg.topic_words < 1 || cfg.topic_words * cfg.gold_regions > cfg.salient_words)
    throw ConfigError("not enough salient words for the requested topics");
  if (cfg.query_len < 1 || cfg.content_words < 1) throw ConfigError("invalid synth config");

  // cells that can hold a maximal gold region
  std::vector<int> full_cells;
  for (int start = 0; start + cfg.gold_len_max <= cfg.doc_len; start += cfg.stride_hint)
    full_cells.push_back(start);
  if (static_cast<int>(full_cells.size()) < cfg.gold_regions)
    throw ConfigError("gold regions exceed source length: need " +
                      std::to_string(cfg.gold_regions) + " cells, have " +
                      std::to_string(full_cells.size()));

  Corpus corpus;
  // fixed vocabulary layout: salient words first, then filler
  std::vector<TokenId> salient_ids, content_ids;
  for (int i = 0; i < cfg.salient_words; ++i)
    salient_ids.push_back(corpus.vocab.add("s" + std::to_string(i)));
  for (int i = 0; i < cfg.content_words; ++i)
    content_ids.push_back(corpus.vocab.add("w" + std::to_string(i)));

  const int g = cfg.gold_regions;
  for (int d = 0; d < n_docs; ++d) {
    Rng rng(Rng::mix(seed, static_cast<uint64_t>(d)));
    Document doc;
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "doc%04d", d);
    doc.doc_id = idbuf;

    // filler source
    doc.source.resize(static_cast<size_t>(cfg.doc_len));
    for (auto& t : doc.source) t = content_ids[rng.below(content_ids.size())];

    // one shared region length per document keeps within-document scores
    // ordered purely by probability
    const int region_len = rng.uniform_int(cfg.gold_len_min, cfg.gold_len_max);

    // distinct topics per region
    std::vector<TokenId> pool = salient_ids;
    rng.shuffle(pool);
    std::vector<std::vector<TokenId>> topics(g);
    for (int r = 0; r < g; ++r)
      topics[r].assign(pool.begin() + r * cfg.topic_words,
                       pool.begin() + (r + 1) * cfg.topic_words);

    // distinct cells, shuffled placement
    std::vector<int> cells = full_cells;
    rng.shuffle(cells);

    // descending probability bands, one per region; the gap keeps the
    // rounded salient counts separated so token evidence never inverts
    // the heuristic score order
    double gap = g > 1 ? 1.25 / cfg.gold_len_min : 0.0;
    double band = (0.4 - (g - 1) * gap) / g;
    if (band < 0.02) {
      band = 0.02;
      gap = g > 1 ? (0.4 - g * band) / (g - 1) : 0.0;
      if (gap < 0.0) gap = 0.0;
    }
    std::vector<SpanAlignment> alignments;
    for (int r = 0; r < g; ++r) {
      const double hi = 1.0 - r * (band + gap);
      const double lo = std::max(0.6, hi - band);
      const double p = rng.uniform(lo, hi);
      const int cell = cells[r];
      const int offset = rng.uniform_int(0, cfg.stride_hint - region_len);
      const int start = cell + offset;
      const int n_sal = std::max(1, salient_count(p, region_len));
      for (int i = 0; i < region_len; ++i) {
        const bool salient = (i * n_sal / region_len) != ((i + 1) * n_sal / region_len);
        doc.source[static_cast<size_t>(start + i)] =
            salient ? topics[r][static_cast<size_t>(rng.below(topics[r].size()))]
                    : content_ids[rng.below(content_ids.size())];
      }
      alignments.push_back({start, region_len, p});
    }

    // low-probability distractor spans anywhere in the source
    for (int k = 0; k < cfg.distractor_spans; ++k) {
      const int len = rng.uniform_int(3, std::min(10, cfg.doc_len));
      const int start = rng.uniform_int(0, cfg.doc_len - len);
      alignments.push_back({start, len, rng.uniform(0.05, 0.35)});
    }
    doc.alignments = std::move(alignments);

    // summary lists each region's topic, most probable region first
    std::vector<TokenId> summary;
    for (int r = 0; r < g; ++r)
      for (TokenId t : topics[r]) summary.push_back(t);
    doc.reference_summary = std::move(summary);

    // query mentions the leading topic words of every region
    std::vector<TokenId> query;
    for (int q = 0; q < cfg.query_len; ++q) {
      const auto& topic = topics[static_cast<size_t>(q % g)];
      query.push_back(topic[static_cast<size_t>((q / g) % cfg.topic_words)]);
    }
    doc.query = std::move(query);

    corpus.docs.push_back(std::move(doc));
  }
  return corpus;
}

}  // namespace ltrsum
