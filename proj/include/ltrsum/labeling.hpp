// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "ltrsum/corpus.hpp"
#include "ltrsum/segmenter.hpp"

namespace ltrsum {

// Per-segment heuristic scores and the graded labels read off them.
struct RelevanceLabelSet {
  std::vector<double> scores;
  std::vector<int> labels;
  double threshold_used = 0.0;

  bool all_zero() const {
    for (int l : labels)
      if (l > 0) return false;
    return true;
  }
};

// Sum of p * ln(intersected span length) over alignments with p >= threshold
// that overlap the segment window. Spans crossing the window boundary
// contribute their intersected token count.
double score_segment(const Segment& seg, const std::vector<SpanAlignment>& alignments,
                     double threshold);

// Dense descending grades: highest distinct positive score -> G, lowest
// distinct positive -> 1, non-positive -> 0; ties share a grade.
std::vector<int> assign_labels(const std::vector<double>& scores);

RelevanceLabelSet label_document(const Document& doc, const std::vector<Segment>& segs,
                                 double threshold);

}  // namespace ltrsum
