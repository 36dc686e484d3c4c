// SPDX-License-Identifier: Apache-2.0
#include "ltrsum/autodiff.hpp"

#include <cmath>

#include "ltrsum/errors.hpp"
#include "ltrsum/losses.hpp"

namespace ltrsum::ad {

namespace {

constexpr double kLnEps = 1e-5;  // layer-norm variance floor

// tanh-form GELU; smooth everywhere, which keeps finite-difference
// gradient checks tight
double gelu_fwd(double x) {
  const double k = 0.7978845608028654;  // sqrt(2/pi)
  const double u = k * (x + 0.044715 * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_bwd(double x) {
  const double k = 0.7978845608028654;
  const double u = k * (x + 0.044715 * x * x * x);
  const double t = std::tanh(u);
  const double sech2 = 1.0 - t * t;
  return 0.5 * (1.0 + t) + 0.5 * x * sech2 * k * (1.0 + 3.0 * 0.044715 * x * x);
}

}  // namespace

NodeId Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::input(Mat value) {
  Node n;
  n.op = Op::kInput;
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Tape::param(Param& p) {
  auto it = param_leaves_.find(&p);
  if (it != param_leaves_.end()) return it->second;
  Node n;
  n.op = Op::kParam;
  n.value = p.value;
  n.bound = &p;
  const NodeId id = push(std::move(n));
  param_leaves_.emplace(&p, id);
  return id;
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  Node n;
  n.op = Op::kMatmul;
  n.a = a;
  n.b = b;
  n.value = Mat(value(a).rows, value(b).cols);
  matmul_acc(value(a), value(b), n.value);
  return push(std::move(n));
}

NodeId Tape::matmul_nt(NodeId a, NodeId b) {
  Node n;
  n.op = Op::kMatmulNT;
  n.a = a;
  n.b = b;
  n.value = Mat(value(a).rows, value(b).rows);
  matmul_nt_acc(value(a), value(b), n.value);
  return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
  if (!value(a).same_shape(value(b))) throw ShapeError("add: shape mismatch");
  Node n;
  n.op = Op::kAdd;
  n.a = a;
  n.b = b;
  n.value = value(a);
  for (size_t i = 0; i < n.value.numel(); ++i) n.value.data[i] += value(b).data[i];
  return push(std::move(n));
}

NodeId Tape::add_rowvec(NodeId a, NodeId bias) {
  const Mat& bv = value(bias);
  if (bv.rows != 1 || bv.cols != value(a).cols) throw ShapeError("add_rowvec: bias shape");
  Node n;
  n.op = Op::kAddRowVec;
  n.a = a;
  n.b = bias;
  n.value = value(a);
  for (int r = 0; r < n.value.rows; ++r) {
    double* row = n.value.row_ptr(r);
    for (int c = 0; c < n.value.cols; ++c) row[c] += bv.data[static_cast<size_t>(c)];
  }
  return push(std::move(n));
}

NodeId Tape::scale(NodeId a, double s) {
  Node n;
  n.op = Op::kScale;
  n.a = a;
  n.scalar = s;
  n.value = value(a);
  for (double& v : n.value.data) v *= s;
  return push(std::move(n));
}

NodeId Tape::gelu(NodeId a) {
  Node n;
  n.op = Op::kGelu;
  n.a = a;
  n.value = value(a);
  for (double& v : n.value.data) v = gelu_fwd(v);
  return push(std::move(n));
}

NodeId Tape::layer_norm(NodeId x, NodeId gain, NodeId bias) {
  const Mat& xv = value(x);
  const Mat& gv = value(gain);
  const Mat& bv = value(bias);
  if (gv.rows != 1 || gv.cols != xv.cols || bv.rows != 1 || bv.cols != xv.cols)
    throw ShapeError("layer_norm: gain/bias shape");
  Node n;
  n.op = Op::kLayerNorm;
  n.a = x;
  n.b = gain;
  n.c = bias;
  n.value = Mat(xv.rows, xv.cols);
  for (int r = 0; r < xv.rows; ++r) {
    const double* in = xv.row_ptr(r);
    double* out = n.value.row_ptr(r);
    double mean = 0.0;
    for (int c = 0; c < xv.cols; ++c) mean += in[c];
    mean /= xv.cols;
    double var = 0.0;
    for (int c = 0; c < xv.cols; ++c) var += (in[c] - mean) * (in[c] - mean);
    var /= xv.cols;
    const double inv_sigma = 1.0 / std::sqrt(var + kLnEps);
    for (int c = 0; c < xv.cols; ++c)
      out[c] = (in[c] - mean) * inv_sigma * gv.data[static_cast<size_t>(c)] +
               bv.data[static_cast<size_t>(c)];
  }
  return push(std::move(n));
}

NodeId Tape::softmax_rows(NodeId a) {
  Node n;
  n.op = Op::kSoftmaxRows;
  n.a = a;
  n.value = value(a);
  for (int r = 0; r < n.value.rows; ++r) {
    double* row = n.value.row_ptr(r);
    double mx = row[0];
    for (int c = 1; c < n.value.cols; ++c) mx = std::max(mx, row[c]);
    double sum = 0.0;
    for (int c = 0; c < n.value.cols; ++c) {
      row[c] = std::exp(row[c] - mx);
      sum += row[c];
    }
    for (int c = 0; c < n.value.cols; ++c) row[c] /= sum;
  }
  return push(std::move(n));
}

NodeId Tape::gather_rows(NodeId table, std::vector<int> indices) {
  const Mat& tv = value(table);
  Node n;
  n.op = Op::kGatherRows;
  n.a = table;
  n.value = Mat(static_cast<int>(indices.size()), tv.cols);
  for (size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= tv.rows) throw ShapeError("gather_rows: index out of range");
    std::copy(tv.row_ptr(indices[i]), tv.row_ptr(indices[i]) + tv.cols,
              n.value.row_ptr(static_cast<int>(i)));
  }
  n.indices = std::move(indices);
  return push(std::move(n));
}

NodeId Tape::concat_rows(const std::vector<NodeId>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no parts");
  int rows = 0;
  const int cols = value(parts[0]).cols;
  for (NodeId p : parts) {
    if (value(p).cols != cols) throw ShapeError("concat_rows: column mismatch");
    rows += value(p).rows;
  }
  Node n;
  n.op = Op::kConcatRows;
  n.parts = parts;
  n.value = Mat(rows, cols);
  int r = 0;
  for (NodeId p : parts) {
    const Mat& pv = value(p);
    std::copy(pv.data.begin(), pv.data.end(), n.value.row_ptr(r));
    r += pv.rows;
  }
  return push(std::move(n));
}

NodeId Tape::slice_rows(NodeId a, int r0, int r1) {
  const Mat& av = value(a);
  if (r0 < 0 || r1 > av.rows || r0 >= r1) throw ShapeError("slice_rows: bad range");
  Node n;
  n.op = Op::kSliceRows;
  n.a = a;
  n.r0 = r0;
  n.r1 = r1;
  n.value = Mat(r1 - r0, av.cols);
  std::copy(av.row_ptr(r0), av.row_ptr(r0) + static_cast<size_t>(r1 - r0) * av.cols,
            n.value.data.begin());
  return push(std::move(n));
}

NodeId Tape::entry(NodeId a, int r, int c) {
  const Mat& av = value(a);
  if (r < 0 || r >= av.rows || c < 0 || c >= av.cols) throw ShapeError("entry: out of range");
  Node n;
  n.op = Op::kEntry;
  n.a = a;
  n.r0 = r;
  n.r1 = c;
  n.value = Mat(1, 1);
  n.value.data[0] = av.at(r, c);
  return push(std::move(n));
}

NodeId Tape::generation_cross_entropy(NodeId logits, std::vector<int> targets, int pad_id) {
  const Mat& lv = value(logits);
  std::vector<std::vector<double>> rows(static_cast<size_t>(lv.rows));
  for (int r = 0; r < lv.rows; ++r) rows[static_cast<size_t>(r)].assign(lv.row_ptr(r), lv.row_ptr(r) + lv.cols);
  std::vector<TokenId> tgt(targets.begin(), targets.end());
  Node n;
  n.op = Op::kGenCE;
  n.a = logits;
  n.value = Mat(1, 1);
  n.value.data[0] = generation_ce(rows, tgt, pad_id);
  n.indices = std::move(targets);
  n.r0 = pad_id;
  return push(std::move(n));
}

NodeId Tape::listwise_softmax_ce(NodeId scores, std::vector<double> target_y, bool normalize) {
  const Mat& sv = value(scores);
  if (sv.cols != 1 || static_cast<size_t>(sv.rows) != target_y.size())
    throw ShapeError("listwise_softmax_ce: scores must be m x 1 matching targets");
  RankingTarget y{target_y, normalize};
  RankingPrediction pred{sv.data};
  Node n;
  n.op = Op::kListwiseCE;
  n.a = scores;
  n.value = Mat(1, 1);
  n.value.data[0] = softmax_ce_listwise(y, pred);
  n.weights = std::move(target_y);
  n.scalar = normalize ? 1.0 : 0.0;
  return push(std::move(n));
}

NodeId Tape::add_scaled(NodeId a, NodeId b, double s) {
  if (!value(a).same_shape(value(b))) throw ShapeError("add_scaled: shape mismatch");
  Node n;
  n.op = Op::kAddScaled;
  n.a = a;
  n.b = b;
  n.scalar = s;
  n.value = value(a);
  for (size_t i = 0; i < n.value.numel(); ++i) n.value.data[i] += s * value(b).data[i];
  return push(std::move(n));
}

void Tape::backward(NodeId root) { backward_into(root, {}); }

void Tape::backward_into(NodeId root, const std::unordered_map<const Param*, Mat*>& sinks) {
  for (auto& n : nodes_) {
    n.grad = Mat(n.value.rows, n.value.cols);
  }
  at(root).grad.fill(1.0);

  for (NodeId id = static_cast<NodeId>(nodes_.size()) - 1; id >= 0; --id) {
    Node& n = at(id);
    const Mat& g = n.grad;
    switch (n.op) {
      case Op::kInput:
        break;
      case Op::kParam: {
        const auto it = sinks.find(n.bound);
        Mat& pg = it != sinks.end() ? *it->second : n.bound->grad;
        for (size_t i = 0; i < pg.numel(); ++i) pg.data[i] += g.data[i];
        break;
      }
      case Op::kMatmul:
        matmul_nt_acc(g, at(n.b).value, at(n.a).grad);
        matmul_tn_acc(at(n.a).value, g, at(n.b).grad);
        break;
      case Op::kMatmulNT:
        matmul_acc(g, at(n.b).value, at(n.a).grad);
        matmul_tn_acc(g, at(n.a).value, at(n.b).grad);
        break;
      case Op::kAdd:
        for (size_t i = 0; i < g.numel(); ++i) {
          at(n.a).grad.data[i] += g.data[i];
          at(n.b).grad.data[i] += g.data[i];
        }
        break;
      case Op::kAddRowVec: {
        Mat& ga = at(n.a).grad;
        Mat& gb = at(n.b).grad;
        for (int r = 0; r < g.rows; ++r) {
          const double* grow = g.row_ptr(r);
          double* garow = ga.row_ptr(r);
          for (int c = 0; c < g.cols; ++c) {
            garow[c] += grow[c];
            gb.data[static_cast<size_t>(c)] += grow[c];
          }
        }
        break;
      }
      case Op::kScale:
        for (size_t i = 0; i < g.numel(); ++i) at(n.a).grad.data[i] += n.scalar * g.data[i];
        break;
      case Op::kGelu: {
        const Mat& x = at(n.a).value;
        for (size_t i = 0; i < g.numel(); ++i)
          at(n.a).grad.data[i] += gelu_bwd(x.data[i]) * g.data[i];
        break;
      }
      case Op::kLayerNorm: {
        const Mat& x = at(n.a).value;
        const Mat& gain = at(n.b).value;
        Mat& gx = at(n.a).grad;
        Mat& ggain = at(n.b).grad;
        Mat& gbias = at(n.c).grad;
        const int d = x.cols;
        for (int r = 0; r < x.rows; ++r) {
          const double* in = x.row_ptr(r);
          const double* grow = g.row_ptr(r);
          double mean = 0.0;
          for (int c = 0; c < d; ++c) mean += in[c];
          mean /= d;
          double var = 0.0;
          for (int c = 0; c < d; ++c) var += (in[c] - mean) * (in[c] - mean);
          var /= d;
          const double inv_sigma = 1.0 / std::sqrt(var + kLnEps);
          // d xhat, then the standard two-correction layer-norm backward
          double sum_dxhat = 0.0;
          double sum_dxhat_xhat = 0.0;
          for (int c = 0; c < d; ++c) {
            const double xhat = (in[c] - mean) * inv_sigma;
            const double dxhat = grow[c] * gain.data[static_cast<size_t>(c)];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
            ggain.data[static_cast<size_t>(c)] += grow[c] * xhat;
            gbias.data[static_cast<size_t>(c)] += grow[c];
          }
          double* gxrow = gx.row_ptr(r);
          for (int c = 0; c < d; ++c) {
            const double xhat = (in[c] - mean) * inv_sigma;
            const double dxhat = grow[c] * gain.data[static_cast<size_t>(c)];
            gxrow[c] += inv_sigma * (dxhat - sum_dxhat / d - xhat * sum_dxhat_xhat / d);
          }
        }
        break;
      }
      case Op::kSoftmaxRows: {
        Mat& ga = at(n.a).grad;
        for (int r = 0; r < g.rows; ++r) {
          const double* y = n.value.row_ptr(r);
          const double* grow = g.row_ptr(r);
          double dot = 0.0;
          for (int c = 0; c < g.cols; ++c) dot += grow[c] * y[c];
          double* garow = ga.row_ptr(r);
          for (int c = 0; c < g.cols; ++c) garow[c] += y[c] * (grow[c] - dot);
        }
        break;
      }
      case Op::kGatherRows: {
        Mat& ga = at(n.a).grad;
        for (size_t i = 0; i < n.indices.size(); ++i) {
          const double* grow = g.row_ptr(static_cast<int>(i));
          double* garow = ga.row_ptr(n.indices[i]);
          for (int c = 0; c < g.cols; ++c) garow[c] += grow[c];
        }
        break;
      }
      case Op::kConcatRows: {
        int r = 0;
        for (NodeId p : n.parts) {
          Mat& gp = at(p).grad;
          for (size_t i = 0; i < gp.numel(); ++i)
            gp.data[i] += g.data[static_cast<size_t>(r) * g.cols + i];
          r += gp.rows;
        }
        break;
      }
      case Op::kSliceRows: {
        Mat& ga = at(n.a).grad;
        for (size_t i = 0; i < g.numel(); ++i)
          ga.data[static_cast<size_t>(n.r0) * ga.cols + i] += g.data[i];
        break;
      }
      case Op::kEntry:
        at(n.a).grad.at(n.r0, n.r1) += g.data[0];
        break;
      case Op::kGenCE: {
        const Mat& logits = at(n.a).value;
        Mat& gl = at(n.a).grad;
        int counted = 0;
        for (int t : n.indices)
          if (t != n.r0) ++counted;
        const double upstream = g.data[0] / counted;
        for (int t = 0; t < logits.rows; ++t) {
          const int target = n.indices[static_cast<size_t>(t)];
          if (target == n.r0) continue;
          const double* row = logits.row_ptr(t);
          double mx = row[0];
          for (int c = 1; c < logits.cols; ++c) mx = std::max(mx, row[c]);
          double sum = 0.0;
          for (int c = 0; c < logits.cols; ++c) sum += std::exp(row[c] - mx);
          double* grow = gl.row_ptr(t);
          for (int c = 0; c < logits.cols; ++c) {
            const double p = std::exp(row[c] - mx) / sum;
            grow[c] += upstream * (p - (c == target ? 1.0 : 0.0));
          }
        }
        break;
      }
      case Op::kListwiseCE: {
        RankingTarget y{n.weights, n.scalar != 0.0};
        RankingPrediction pred{at(n.a).value.data};
        const auto grad_scores = softmax_ce_grad(y, pred);
        Mat& ga = at(n.a).grad;
        for (size_t i = 0; i < grad_scores.size(); ++i)
          ga.data[i] += g.data[0] * grad_scores[i];
        break;
      }
      case Op::kAddScaled:
        for (size_t i = 0; i < g.numel(); ++i) {
          at(n.a).grad.data[i] += g.data[i];
          at(n.b).grad.data[i] += n.scalar * g.data[i];
        }
        break;
    }
  }
}

}  // namespace ltrsum::ad
