// SPDX-License-Identifier: Apache-2.0
#include "ltrsum/segmenter.hpp"

#include <algorithm>

#include "ltrsum/errors.hpp"

namespace ltrsum {

void SegmentationConfig::validate() const {
  if (window_len < 1) throw ConfigError("window_len must be >= 1");
  if (stride < 1 || stride > window_len) throw ConfigError("stride must be in [1, window_len]");
  if (max_segments < 1) throw ConfigError("max_segments must be >= 1");
  if (query_max < 1) throw ConfigError("query_max must be >= 1");
}

int SegmentationConfig::max_framed_len() const { return 2 + query_max + window_len; }

std::vector<Segment> segment_document(const Document& doc, const SegmentationConfig& cfg) {
  cfg.validate();
  const int n = static_cast<int>(doc.source.size());

  std::vector<TokenId> frame;
  frame.push_back(Vocab::kBos);
  const int q_len = std::min<int>(cfg.query_max, static_cast<int>(doc.query.size()));
  frame.insert(frame.end(), doc.query.begin(), doc.query.begin() + q_len);
  frame.push_back(Vocab::kSep);

  std::vector<Segment> segments;
  for (int start = 0; start < n; start += cfg.stride) {
    if (static_cast<int>(segments.size()) == cfg.max_segments) break;
    Segment seg;
    seg.index = static_cast<int>(segments.size());
    seg.source_start = start;
    seg.source_end = std::min(n, start + cfg.window_len);
    seg.framed_tokens = frame;
    seg.framed_tokens.insert(seg.framed_tokens.end(), doc.source.begin() + start,
                             doc.source.begin() + seg.source_end);
    segments.push_back(std::move(seg));
    // the window that reaches the source end is the last one; later
    // starts would add no uncovered token
    if (seg.source_end == n) break;
  }
  return segments;
}

}  // namespace ltrsum
