// SPDX-License-Identifier: Apache-2.0
#include "ltrsum/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "ltrsum/errors.hpp"

namespace ltrsum {

double dcg(const RelevanceVector& rel, int p) {
  const int m = static_cast<int>(rel.rel.size());
  if (p < 1 || p > m) throw ValidationError("dcg cutoff p must be in [1, m]");
  double sum = 0.0;
  for (int i = 1; i <= p; ++i) {
    const int r = rel.rel[static_cast<size_t>(i - 1)];
    if (r < 0) throw ValidationError("relevance grades must be non-negative");
    sum += (std::exp2(static_cast<double>(r)) - 1.0) / std::log2(static_cast<double>(i + 1));
  }
  return sum;
}

double ndcg(const RankedList& pred, const std::vector<int>& gold_labels, int p) {
  const size_t m = gold_labels.size();
  if (pred.order.size() != m) throw ShapeError("ndcg: predicted order and gold label lengths differ");
  if (std::all_of(gold_labels.begin(), gold_labels.end(), [](int l) { return l == 0; }))
    throw ValidationError("undefined nDCG: gold labels are all zero");

  RelevanceVector rel;
  rel.rel.reserve(m);
  for (int idx : pred.order) {
    if (idx < 0 || static_cast<size_t>(idx) >= m) throw ShapeError("ndcg: order index out of range");
    rel.rel.push_back(gold_labels[static_cast<size_t>(idx)]);
  }
  std::vector<int> ideal = gold_labels;
  std::sort(ideal.begin(), ideal.end(), std::greater<int>());
  const double idcg = dcg(RelevanceVector{ideal}, p);
  return dcg(rel, p) / idcg;
}

RankedList rank_by_scores(const std::vector<double>& scores) {
  RankedList out;
  out.order.resize(scores.size());
  std::iota(out.order.begin(), out.order.end(), 0);
  std::stable_sort(out.order.begin(), out.order.end(), [&](int a, int b) {
    return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
  });
  out.scores.reserve(scores.size());
  for (int idx : out.order) out.scores.push_back(scores[static_cast<size_t>(idx)]);
  return out;
}

RankedList rank_by_ltr(Model& model, const std::vector<Segment>& segs) {
  return rank_by_scores(model.ltr_scores(segs));
}

RankedList rank_by_attention(const ForwardTrace& trace, const std::vector<Segment>& segs) {
  const int m = static_cast<int>(segs.size());
  if (static_cast<size_t>(m) != trace.seg_real_len.size())
    throw ShapeError("rank_by_attention: trace does not match segment count");
  std::vector<double> mass(static_cast<size_t>(m), 0.0);
  const Mat& attn = trace.cross_attention;
  for (int step = 0; step < attn.rows; ++step) {
    const double* row = attn.row_ptr(step);
    for (int i = 0; i < m; ++i) {
      const int base = i * trace.padded_len;
      for (int j = 0; j < trace.seg_real_len[static_cast<size_t>(i)]; ++j)
        mass[static_cast<size_t>(i)] += row[base + j];
    }
  }
  return rank_by_scores(mass);
}

RelevanceVector greedy_match_relevance(const RankedList& pred,
                                       const std::vector<int>& gold_labels) {
  RelevanceVector rel;
  rel.rel.reserve(pred.order.size());
  for (int idx : pred.order) {
    if (idx < 0 || static_cast<size_t>(idx) >= gold_labels.size())
      throw ShapeError("greedy_match_relevance: order index out of range");
    rel.rel.push_back(gold_labels[static_cast<size_t>(idx)]);
  }
  return rel;
}

namespace {

RougeScore from_counts(double overlap, double cand_total, double ref_total) {
  RougeScore s;
  if (cand_total > 0.0) s.precision = overlap / cand_total;
  if (ref_total > 0.0) s.recall = overlap / ref_total;
  if (s.precision + s.recall > 0.0)
    s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

RougeScore rouge_ngram(const std::vector<TokenId>& cand, const std::vector<TokenId>& ref, int n) {
  const auto count_ngrams = [n](const std::vector<TokenId>& seq) {
    std::map<std::vector<TokenId>, int> counts;
    if (static_cast<int>(seq.size()) >= n) {
      for (size_t i = 0; i + static_cast<size_t>(n) <= seq.size(); ++i) {
        counts[std::vector<TokenId>(seq.begin() + static_cast<long>(i),
                                    seq.begin() + static_cast<long>(i) + n)] += 1;
      }
    }
    return counts;
  };
  const auto cand_counts = count_ngrams(cand);
  const auto ref_counts = count_ngrams(ref);
  double overlap = 0.0;
  for (const auto& [gram, c] : cand_counts) {
    const auto it = ref_counts.find(gram);
    if (it != ref_counts.end()) overlap += std::min(c, it->second);  // clipped
  }
  double cand_total = 0.0, ref_total = 0.0;
  for (const auto& [gram, c] : cand_counts) cand_total += c;
  for (const auto& [gram, c] : ref_counts) ref_total += c;
  return from_counts(overlap, cand_total, ref_total);
}

RougeScore rouge_lcs(const std::vector<TokenId>& cand, const std::vector<TokenId>& ref) {
  const size_t a = cand.size(), b = ref.size();
  std::vector<int> prev(b + 1, 0), cur(b + 1, 0);
  for (size_t i = 1; i <= a; ++i) {
    for (size_t j = 1; j <= b; ++j) {
      cur[j] = cand[i - 1] == ref[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  const double lcs = prev[b];
  return from_counts(lcs, static_cast<double>(a), static_cast<double>(b));
}

}  // namespace

RougeScore rouge(const std::vector<TokenId>& candidate, const std::vector<TokenId>& reference,
                 RougeVariant variant) {
  if (reference.empty()) throw ValidationError("rouge: reference must be non-empty");
  if (candidate.empty()) return {};
  switch (variant) {
    case RougeVariant::kRouge1:
      return rouge_ngram(candidate, reference, 1);
    case RougeVariant::kRouge2:
      return rouge_ngram(candidate, reference, 2);
    case RougeVariant::kRougeL:
      return rouge_lcs(candidate, reference);
  }
  throw ValidationError("rouge: unknown variant");
}

}  // namespace ltrsum
