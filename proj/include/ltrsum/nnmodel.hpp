// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ltrsum/autodiff.hpp"
#include "ltrsum/corpus.hpp"
#include "ltrsum/segmenter.hpp"
#include "ltrsum/tensor.hpp"

namespace ltrsum {

struct ModelConfig {
  int d_model = 32;
  int n_heads = 2;
  int n_layers = 1;
  int ffn_mult = 2;
  int vocab_size = 0;
  int max_positions = 128;
  uint64_t seed = 0;
  // ablation switches; defaults follow the segment-BOS / tied-head reading
  bool ltr_full_segment = false;
  bool untied_ltr_head = false;

  void validate() const;
  int head_dim() const { return d_model / n_heads; }
  int ffn_dim() const { return d_model * ffn_mult; }
};

// Everything the evaluation side needs from one generation pass.
struct ForwardTrace {
  std::vector<Mat> segment_encodings;  // per segment: padded_len x d_model
  Mat segment_bos;                     // m x d_model, encoder output at <s>
  Mat generation_logits;               // steps x vocab
  Mat ltr_logits;                      // m x vocab
  std::vector<double> ltr_scores;      // extra-token logit per segment
  Mat cross_attention;                 // steps x (m * padded_len), head/layer mean
  std::vector<int> seg_real_len;
  int padded_len = 0;
};

// Toy pre-LN transformer encoder-decoder. One decoder parameter set
// serves two forward passes: summary generation over all segment
// encodings, and per-segment scoring whose output logit at
// <extra_token> is the ranking score.
class Model {
 public:
  explicit Model(const ModelConfig& cfg);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return cfg_; }

  struct Encoded {
    std::vector<ad::NodeId> segments;  // padded_len x d_model each
    std::vector<int> real_len;
    int padded_len = 0;
  };

  // Pads segments to a common length; PAD never receives attention.
  // `min_padded_len` widens the padding (mask-correctness tests).
  Encoded encode_segments(ad::Tape& tape, const std::vector<Segment>& segs,
                          int min_padded_len = 0);

  struct GenerationOut {
    ad::NodeId logits;           // steps x vocab
    ad::NodeId cross_attention;  // steps x (m * padded_len)
  };

  // Teacher-forced decode over the concatenation of all segment
  // encodings; prefix must begin with BOS.
  GenerationOut generation_forward(ad::Tape& tape, const Encoded& enc,
                                   const std::vector<TokenId>& prefix);

  struct LtrOut {
    ad::NodeId scores;  // m x 1, extra-token logits
    ad::NodeId logits;  // m x vocab
  };

  // One decoder step per segment with BOS input, cross-attending to that
  // segment's <s> encoder vector (or the full encoding when configured).
  LtrOut ltr_forward(ad::Tape& tape, const Encoded& enc);

  struct DocBatch {
    std::vector<Segment> segments;
    std::vector<TokenId> summary;         // reference, unframed
    std::vector<double> ranking_target;   // gold mass per segment; may be all zero
    bool normalize_targets = true;
  };

  struct LossBreakdown {
    double gen = 0.0;
    double ltr = 0.0;
    double joint = 0.0;
    bool ltr_active = false;  // false when the target carries no mass or lambda == 0
  };

  // Forward-only joint loss; used by finite-difference checks.
  LossBreakdown compute_loss(const DocBatch& doc, double lambda);

  // Joint loss plus exact reverse-mode gradients accumulated into the
  // parameter set. Both passes contribute to the shared decoder.
  LossBreakdown backward(const DocBatch& doc, double lambda);

  struct JointOut {
    ad::NodeId joint;
    LossBreakdown values;
  };

  // Builds the joint-loss graph on a caller tape; the caller decides how
  // to run backward (directly or into worker-shard buffers).
  JointOut build_joint_loss(ad::Tape& tape, const DocBatch& doc, double lambda);

  ForwardTrace forward_trace(const std::vector<Segment>& segs,
                             const std::vector<TokenId>& prefix);

  std::vector<double> ltr_scores(const std::vector<Segment>& segs);

  // Greedy decoding from BOS until SEP or max_len tokens.
  std::vector<TokenId> greedy_decode(const std::vector<Segment>& segs, int max_len);

  std::vector<ad::Param*>& parameters() { return param_index_; }
  const std::vector<ad::Param*>& parameters() const { return param_index_; }
  ad::Param* find_parameter(const std::string& name);
  void zero_grads();

 private:
  struct Attention {
    std::vector<ad::Param> wq, wk, wv, wo;  // per head
    ad::Param bias;
  };
  struct LayerNorm {
    ad::Param gain, bias;
  };
  struct Ffn {
    ad::Param w1, b1, w2, b2;
  };
  struct EncoderLayer {
    LayerNorm ln1;
    Attention attn;
    LayerNorm ln2;
    Ffn ffn;
  };
  struct DecoderLayer {
    LayerNorm ln1;
    Attention self_attn;
    LayerNorm ln2;
    Attention cross_attn;
    LayerNorm ln3;
    Ffn ffn;
  };
  struct UntiedHead {
    ad::Param w1, b1, w2, b2;
  };

  ad::NodeId attention_block(ad::Tape& tape, Attention& attn, ad::NodeId queries,
                             ad::NodeId memory, const Mat* mask, ad::NodeId* attn_weights);
  ad::NodeId encoder_forward(ad::Tape& tape, const std::vector<TokenId>& padded_tokens,
                             int real_len);
  ad::NodeId decoder_forward(ad::Tape& tape, const std::vector<TokenId>& prefix, ad::NodeId memory,
                             const Mat* cross_mask, std::vector<ad::NodeId>* cross_attns);
  ad::NodeId output_logits(ad::Tape& tape, ad::NodeId dec_out, bool ltr_head);
  ad::NodeId embed(ad::Tape& tape, const std::vector<TokenId>& tokens);

  void register_params();

  ModelConfig cfg_;
  ad::Param tok_emb_;
  ad::Param pos_emb_;
  std::vector<EncoderLayer> enc_layers_;
  std::vector<DecoderLayer> dec_layers_;
  LayerNorm enc_final_ln_;
  LayerNorm dec_final_ln_;
  ad::Param out_proj_;  // d_model x vocab
  ad::Param out_bias_;
  UntiedHead untied_head_;  // allocated only when configured
  std::vector<ad::Param*> param_index_;
};

}  // namespace ltrsum
