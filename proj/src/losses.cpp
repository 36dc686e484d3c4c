// SPDX-License-Identifier: Apache-2.0
#include "ltrsum/losses.hpp"

#include <algorithm>
#include <cmath>

#include "ltrsum/errors.hpp"

namespace ltrsum {

double log_sum_exp(const std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += std::exp(x - m);
  return m + std::log(sum);
}

namespace {

double target_mass(const RankingTarget& y) {
  double sum = 0.0;
  for (double v : y.y) {
    if (v < 0.0) throw ValidationError("relevance targets must be non-negative");
    sum += v;
  }
  if (sum <= 0.0) throw ValidationError("no positive relevance mass");
  return sum;
}

void check_lengths(const RankingTarget& y, const RankingPrediction& y_hat) {
  if (y.y.empty()) throw ShapeError("ranking list must be non-empty");
  if (y.y.size() != y_hat.y_hat.size())
    throw ShapeError("ranking target and prediction lengths differ");
  for (double v : y_hat.y_hat) {
    if (!std::isfinite(v)) throw ValidationError("predicted scores must be finite");
  }
}

}  // namespace

double softmax_ce_listwise(const RankingTarget& y, const RankingPrediction& y_hat) {
  check_lengths(y, y_hat);
  const double sum_y = target_mass(y);
  const double scale = y.normalize ? 1.0 / sum_y : 1.0;
  const double lse = log_sum_exp(y_hat.y_hat);
  double loss = 0.0;
  for (size_t j = 0; j < y.y.size(); ++j) {
    loss -= scale * y.y[j] * (y_hat.y_hat[j] - lse);
  }
  return loss;
}

std::vector<double> softmax_ce_grad(const RankingTarget& y, const RankingPrediction& y_hat) {
  check_lengths(y, y_hat);
  const double sum_y = target_mass(y);
  const double scale = y.normalize ? 1.0 / sum_y : 1.0;
  const double lse = log_sum_exp(y_hat.y_hat);
  std::vector<double> grad(y.y.size());
  for (size_t j = 0; j < y.y.size(); ++j) {
    const double softmax_j = std::exp(y_hat.y_hat[j] - lse);
    grad[j] = softmax_j * (scale * sum_y) - scale * y.y[j];
  }
  return grad;
}

double generation_ce(const std::vector<std::vector<double>>& logits,
                     const std::vector<TokenId>& target, TokenId pad_id) {
  if (logits.size() != target.size())
    throw ShapeError("generation_ce: logits steps (" + std::to_string(logits.size()) +
                     ") != target length (" + std::to_string(target.size()) + ")");
  double total = 0.0;
  int counted = 0;
  for (size_t t = 0; t < target.size(); ++t) {
    if (target[t] == pad_id) continue;
    const auto& row = logits[t];
    if (target[t] < 0 || static_cast<size_t>(target[t]) >= row.size())
      throw ShapeError("generation_ce: target token outside vocab");
    total += log_sum_exp(row) - row[static_cast<size_t>(target[t])];
    ++counted;
  }
  if (counted == 0) throw ValidationError("generation_ce: target is all PAD");
  return total / counted;
}

double joint_loss(double gen, double ltr, const JointLossConfig& cfg) {
  if (!std::isfinite(gen) || !std::isfinite(ltr)) throw ValidationError("loss terms must be finite");
  if (!(cfg.lambda >= 0.0) || !std::isfinite(cfg.lambda))
    throw ValidationError("lambda must be finite and non-negative");
  return gen + cfg.lambda * ltr;
}

}  // namespace ltrsum
