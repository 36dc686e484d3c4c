// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "ltrsum/corpus.hpp"

namespace ltrsum {

// Gold relevance mass per segment, from RelevanceLabelSet labels.
struct RankingTarget {
  std::vector<double> y;
  // divide by sum(y) before the loss; the raw-y variant mirrors the
  // printed equation and is kept for fidelity experiments
  bool normalize = true;
};

struct RankingPrediction {
  std::vector<double> y_hat;
};

struct JointLossConfig {
  double lambda = 1.0;
};

// Listwise softmax cross-entropy: -sum_j y_j * log softmax(y_hat)_j,
// evaluated with a log-sum-exp shift. Throws on all-zero y.
double softmax_ce_listwise(const RankingTarget& y, const RankingPrediction& y_hat);

// d loss / d y_hat_j = softmax(y_hat)_j * sum(y) - y_j.
std::vector<double> softmax_ce_grad(const RankingTarget& y, const RankingPrediction& y_hat);

// Mean over non-PAD target positions of -log softmax(logits_t)[target_t].
// `logits` holds one row of `vocab` scores per step.
double generation_ce(const std::vector<std::vector<double>>& logits,
                     const std::vector<TokenId>& target, TokenId pad_id);

double joint_loss(double gen, double ltr, const JointLossConfig& cfg);

// Shared helper: log(sum(exp(v))) with max shift.
double log_sum_exp(const std::vector<double>& v);

}  // namespace ltrsum
