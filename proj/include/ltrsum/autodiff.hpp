// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "ltrsum/tensor.hpp"

namespace ltrsum::ad {

using NodeId = int32_t;

// A trainable tensor with its gradient accumulator.
struct Param {
  std::string name;
  Mat value;
  Mat grad;

  Param() = default;
  Param(std::string n, int r, int c) : name(std::move(n)), value(r, c), grad(r, c) {}

  void zero_grad() { grad.fill(0.0); }
};

// Reverse-mode tape over Mat-valued nodes. One tape per training step;
// parameters live outside and receive accumulated gradients on
// backward(). Using the same Param in several subgraphs (the shared
// decoder) reuses one leaf, so contributions from every pass sum.
class Tape {
 public:
  NodeId input(Mat value);
  NodeId param(Param& p);

  NodeId matmul(NodeId a, NodeId b);     // A * B
  NodeId matmul_nt(NodeId a, NodeId b);  // A * B^T
  NodeId add(NodeId a, NodeId b);
  NodeId add_rowvec(NodeId a, NodeId bias);  // bias broadcast over rows
  NodeId scale(NodeId a, double s);
  NodeId gelu(NodeId a);
  NodeId layer_norm(NodeId x, NodeId gain, NodeId bias);  // rowwise
  NodeId softmax_rows(NodeId a);
  NodeId gather_rows(NodeId table, std::vector<int> indices);
  NodeId concat_rows(const std::vector<NodeId>& parts);
  NodeId slice_rows(NodeId a, int r0, int r1);
  NodeId entry(NodeId a, int r, int c);  // 1x1 view of one element

  // Mean over non-PAD steps of -log softmax(logits_t)[target_t]; scalar node.
  NodeId generation_cross_entropy(NodeId logits, std::vector<int> targets, int pad_id);
  // Listwise softmax CE of an m x 1 score column against fixed gold mass.
  NodeId listwise_softmax_ce(NodeId scores, std::vector<double> target_y, bool normalize);
  // a + s * b for scalar nodes
  NodeId add_scaled(NodeId a, NodeId b, double s);

  const Mat& value(NodeId id) const { return nodes_[static_cast<size_t>(id)].value; }
  const Mat& grad(NodeId id) const { return nodes_[static_cast<size_t>(id)].grad; }

  // Seeds d(root)=1 and accumulates into every bound Param::grad.
  void backward(NodeId root);

  // Same, but gradients land in caller-owned buffers keyed by Param;
  // lets worker shards run concurrently against shared parameters.
  void backward_into(NodeId root, const std::unordered_map<const Param*, Mat*>& sinks);

  size_t size() const { return nodes_.size(); }

 private:
  enum class Op : uint8_t {
    kInput,
    kParam,
    kMatmul,
    kMatmulNT,
    kAdd,
    kAddRowVec,
    kScale,
    kGelu,
    kLayerNorm,
    kSoftmaxRows,
    kGatherRows,
    kConcatRows,
    kSliceRows,
    kEntry,
    kGenCE,
    kListwiseCE,
    kAddScaled,
  };

  struct Node {
    Op op;
    Mat value;
    Mat grad;
    NodeId a = -1;
    NodeId b = -1;
    NodeId c = -1;
    double scalar = 0.0;
    int r0 = 0, r1 = 0;
    std::vector<int> indices;
    std::vector<double> weights;
    std::vector<NodeId> parts;
    Param* bound = nullptr;
  };

  NodeId push(Node node);
  Node& at(NodeId id) { return nodes_[static_cast<size_t>(id)]; }

  std::vector<Node> nodes_;
  std::unordered_map<const Param*, NodeId> param_leaves_;
};

}  // namespace ltrsum::ad
