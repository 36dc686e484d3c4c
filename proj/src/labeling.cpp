// SPDX-License-Identifier: Apache-2.0
#include "ltrsum/labeling.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "ltrsum/errors.hpp"

namespace ltrsum {

double score_segment(const Segment& seg, const std::vector<SpanAlignment>& alignments,
                     double threshold) {
  if (threshold < 0.0 || threshold > 1.0) throw ValidationError("threshold must be in [0, 1]");
  double score = 0.0;
  for (const auto& a : alignments) {
    if (a.probability < threshold) continue;
    const int lo = std::max(seg.source_start, a.source_start);
    const int hi = std::min(seg.source_end, a.source_start + a.span_len);
    if (hi <= lo) continue;
    score += a.probability * std::log(static_cast<double>(hi - lo));
  }
  return score;
}

std::vector<int> assign_labels(const std::vector<double>& scores) {
  for (double s : scores) {
    if (!std::isfinite(s)) throw ValidationError("scores must be finite");
  }
  std::set<double> distinct_positive;
  for (double s : scores) {
    if (s > 0.0) distinct_positive.insert(s);
  }
  std::vector<int> labels(scores.size(), 0);
  for (size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] <= 0.0) continue;
    // grade = 1 + number of distinct positive scores strictly below
    const auto it = distinct_positive.find(scores[i]);
    labels[i] = 1 + static_cast<int>(std::distance(distinct_positive.begin(), it));
  }
  return labels;
}

RelevanceLabelSet label_document(const Document& doc, const std::vector<Segment>& segs,
                                 double threshold) {
  RelevanceLabelSet out;
  out.threshold_used = threshold;
  const std::vector<SpanAlignment> empty;
  const auto& alignments = doc.alignments ? *doc.alignments : empty;
  out.scores.reserve(segs.size());
  for (const auto& seg : segs) out.scores.push_back(score_segment(seg, alignments, threshold));
  out.labels = assign_labels(out.scores);
  return out;
}

}  // namespace ltrsum
