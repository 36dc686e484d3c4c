// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "ltrsum/corpus.hpp"

namespace ltrsum {

// One query-framed source window: `<s> query </s> window...`.
struct Segment {
  int index = 0;
  std::vector<TokenId> framed_tokens;
  int source_start = 0;
  int source_end = 0;  // exclusive
};

struct SegmentationConfig {
  int window_len = 48;
  int stride = 24;
  int max_segments = 16;
  int query_max = 16;  // query tokens kept in the frame

  void validate() const;

  // BOS + query (truncated) + SEP + window
  int max_framed_len() const;
};

// Windows start at 0, stride, 2*stride, ... as long as at least one
// source token remains; the tail window may be short. The frame is
// identical for every segment of a document.
std::vector<Segment> segment_document(const Document& doc, const SegmentationConfig& cfg);

}  // namespace ltrsum
