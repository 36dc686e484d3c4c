// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "ltrsum/corpus.hpp"
#include "ltrsum/nnmodel.hpp"
#include "ltrsum/segmenter.hpp"

namespace ltrsum {

// Segment indices best-first with their scores aligned to the order.
struct RankedList {
  std::vector<int> order;
  std::vector<double> scores;
};

struct RelevanceVector {
  std::vector<int> rel;
};

// DCG_p = sum_{i=1..p} (2^rel_i - 1) / log2(i + 1).
double dcg(const RelevanceVector& rel, int p);

// Gold labels read in predicted order, normalized by the ideal DCG.
// Throws on all-zero gold (undefined nDCG).
double ndcg(const RankedList& pred, const std::vector<int>& gold_labels, int p);

// Shared ordering rule: descending score, ties by ascending index.
RankedList rank_by_scores(const std::vector<double>& scores);

RankedList rank_by_ltr(Model& model, const std::vector<Segment>& segs);

// Ranks segments by total generation cross-attention mass over their
// token positions across all decode steps.
RankedList rank_by_attention(const ForwardTrace& trace, const std::vector<Segment>& segs);

// Reads the gold label of each predicted segment, best-first.
RelevanceVector greedy_match_relevance(const RankedList& pred,
                                       const std::vector<int>& gold_labels);

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

enum class RougeVariant { kRouge1, kRouge2, kRougeL };

RougeScore rouge(const std::vector<TokenId>& candidate, const std::vector<TokenId>& reference,
                 RougeVariant variant);

}  // namespace ltrsum
