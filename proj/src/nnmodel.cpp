// SPDX-License-Identifier: Apache-2.0
#include "ltrsum/nnmodel.hpp"

#include <algorithm>
#include <cmath>

#include "ltrsum/errors.hpp"
#include "ltrsum/losses.hpp"
#include "ltrsum/rng.hpp"

namespace ltrsum {

namespace {
constexpr double kMaskedScore = -1e9;
}

void ModelConfig::validate() const {
  if (d_model < 1 || n_heads < 1 || n_layers < 1 || ffn_mult < 1)
    throw ConfigError("model dimensions must be >= 1");
  if (d_model % n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
  if (vocab_size <= Vocab::kNumReserved)
    throw ConfigError("vocab_size must exceed the reserved token count");
  if (max_positions < 2) throw ConfigError("max_positions must be >= 2");
}

Model::Model(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const int d = cfg_.d_model;
  const int dh = cfg_.head_dim();
  const int f = cfg_.ffn_dim();
  const int v = cfg_.vocab_size;

  auto make_attention = [&](const std::string& prefix) {
    Attention a;
    for (int h = 0; h < cfg_.n_heads; ++h) {
      const std::string hp = prefix + ".h" + std::to_string(h);
      a.wq.emplace_back(hp + ".wq", d, dh);
      a.wk.emplace_back(hp + ".wk", d, dh);
      a.wv.emplace_back(hp + ".wv", d, dh);
      a.wo.emplace_back(hp + ".wo", dh, d);
    }
    a.bias = ad::Param(prefix + ".bias", 1, d);
    return a;
  };
  auto make_ln = [&](const std::string& prefix) {
    LayerNorm ln;
    ln.gain = ad::Param(prefix + ".gain", 1, d);
    ln.bias = ad::Param(prefix + ".bias", 1, d);
    return ln;
  };
  auto make_ffn = [&](const std::string& prefix) {
    Ffn ffn;
    ffn.w1 = ad::Param(prefix + ".w1", d, f);
    ffn.b1 = ad::Param(prefix + ".b1", 1, f);
    ffn.w2 = ad::Param(prefix + ".w2", f, d);
    ffn.b2 = ad::Param(prefix + ".b2", 1, d);
    return ffn;
  };

  tok_emb_ = ad::Param("tok_emb", v, d);
  pos_emb_ = ad::Param("pos_emb", cfg_.max_positions, d);
  for (int l = 0; l < cfg_.n_layers; ++l) {
    const std::string lp = "enc.l" + std::to_string(l);
    EncoderLayer layer;
    layer.ln1 = make_ln(lp + ".ln1");
    layer.attn = make_attention(lp + ".attn");
    layer.ln2 = make_ln(lp + ".ln2");
    layer.ffn = make_ffn(lp + ".ffn");
    enc_layers_.push_back(std::move(layer));
  }
  for (int l = 0; l < cfg_.n_layers; ++l) {
    const std::string lp = "dec.l" + std::to_string(l);
    DecoderLayer layer;
    layer.ln1 = make_ln(lp + ".ln1");
    layer.self_attn = make_attention(lp + ".self");
    layer.ln2 = make_ln(lp + ".ln2");
    layer.cross_attn = make_attention(lp + ".cross");
    layer.ln3 = make_ln(lp + ".ln3");
    layer.ffn = make_ffn(lp + ".ffn");
    dec_layers_.push_back(std::move(layer));
  }
  enc_final_ln_ = make_ln("enc.final_ln");
  dec_final_ln_ = make_ln("dec.final_ln");
  out_proj_ = ad::Param("head.proj", d, v);
  out_bias_ = ad::Param("head.bias", 1, v);
  if (cfg_.untied_ltr_head) {
    untied_head_.w1 = ad::Param("ltr_head.w1", d, d);
    untied_head_.b1 = ad::Param("ltr_head.b1", 1, d);
    untied_head_.w2 = ad::Param("ltr_head.w2", d, v);
    untied_head_.b2 = ad::Param("ltr_head.b2", 1, v);
  }

  register_params();

  // uniform(-0.1, 0.1) weights, unit gains, zero biases
  Rng rng(cfg_.seed);
  for (ad::Param* p : param_index_) {
    const std::string& n = p->name;
    const bool is_gain = n.size() >= 5 && n.compare(n.size() - 5, 5, ".gain") == 0;
    const bool is_bias = (n.size() >= 5 && n.compare(n.size() - 5, 5, ".bias") == 0) ||
                         (n.size() >= 3 && n.compare(n.size() - 3, 3, ".b1") == 0) ||
                         (n.size() >= 3 && n.compare(n.size() - 3, 3, ".b2") == 0);
    if (is_gain) {
      p->value.fill(1.0);
    } else if (is_bias) {
      p->value.fill(0.0);
    } else {
      for (double& w : p->value.data) w = rng.uniform(-0.1, 0.1);
    }
  }
}

void Model::register_params() {
  param_index_.clear();
  auto reg = [&](ad::Param& p) { param_index_.push_back(&p); };
  reg(tok_emb_);
  reg(pos_emb_);
  auto reg_attn = [&](Attention& a) {
    for (int h = 0; h < cfg_.n_heads; ++h) {
      reg(a.wq[static_cast<size_t>(h)]);
      reg(a.wk[static_cast<size_t>(h)]);
      reg(a.wv[static_cast<size_t>(h)]);
      reg(a.wo[static_cast<size_t>(h)]);
    }
    reg(a.bias);
  };
  auto reg_ln = [&](LayerNorm& ln) {
    reg(ln.gain);
    reg(ln.bias);
  };
  auto reg_ffn = [&](Ffn& f) {
    reg(f.w1);
    reg(f.b1);
    reg(f.w2);
    reg(f.b2);
  };
  for (auto& l : enc_layers_) {
    reg_ln(l.ln1);
    reg_attn(l.attn);
    reg_ln(l.ln2);
    reg_ffn(l.ffn);
  }
  for (auto& l : dec_layers_) {
    reg_ln(l.ln1);
    reg_attn(l.self_attn);
    reg_ln(l.ln2);
    reg_attn(l.cross_attn);
    reg_ln(l.ln3);
    reg_ffn(l.ffn);
  }
  reg_ln(enc_final_ln_);
  reg_ln(dec_final_ln_);
  reg(out_proj_);
  reg(out_bias_);
  if (cfg_.untied_ltr_head) {
    reg(untied_head_.w1);
    reg(untied_head_.b1);
    reg(untied_head_.w2);
    reg(untied_head_.b2);
  }
}

ad::Param* Model::find_parameter(const std::string& name) {
  for (ad::Param* p : param_index_)
    if (p->name == name) return p;
  return nullptr;
}

void Model::zero_grads() {
  for (ad::Param* p : param_index_) p->zero_grad();
}

ad::NodeId Model::embed(ad::Tape& tape, const std::vector<TokenId>& tokens) {
  std::vector<int> tok_idx(tokens.begin(), tokens.end());
  std::vector<int> pos_idx(tokens.size());
  for (size_t i = 0; i < tokens.size(); ++i) pos_idx[i] = static_cast<int>(i);
  const ad::NodeId te = tape.gather_rows(tape.param(tok_emb_), tok_idx);
  const ad::NodeId pe = tape.gather_rows(tape.param(pos_emb_), pos_idx);
  return tape.add(te, pe);
}

ad::NodeId Model::attention_block(ad::Tape& tape, Attention& attn, ad::NodeId queries,
                                  ad::NodeId memory, const Mat* mask,
                                  ad::NodeId* attn_weights) {
  auto* self = &attn;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(cfg_.head_dim()));
  ad::NodeId mask_node = -1;
  if (mask != nullptr) mask_node = tape.input(*mask);

  ad::NodeId out = -1;
  ad::NodeId weight_sum = -1;
  for (int h = 0; h < cfg_.n_heads; ++h) {
    const auto hi = static_cast<size_t>(h);
    const ad::NodeId q = tape.matmul(queries, tape.param(self->wq[hi]));
    const ad::NodeId k = tape.matmul(memory, tape.param(self->wk[hi]));
    const ad::NodeId v = tape.matmul(memory, tape.param(self->wv[hi]));
    ad::NodeId scores = tape.scale(tape.matmul_nt(q, k), inv_sqrt_dh);
    if (mask_node >= 0) scores = tape.add(scores, mask_node);
    const ad::NodeId weights = tape.softmax_rows(scores);
    const ad::NodeId head_out = tape.matmul(weights, v);
    const ad::NodeId proj = tape.matmul(head_out, tape.param(self->wo[hi]));
    out = out < 0 ? proj : tape.add(out, proj);
    if (attn_weights != nullptr)
      weight_sum = weight_sum < 0 ? weights : tape.add(weight_sum, weights);
  }
  out = tape.add_rowvec(out, tape.param(self->bias));
  if (attn_weights != nullptr) *attn_weights = tape.scale(weight_sum, 1.0 / cfg_.n_heads);
  return out;
}

namespace {

// additive key mask: valid keys 0, masked keys a large negative score
Mat key_mask(int query_rows, int key_cols, const std::vector<bool>& valid) {
  Mat m(query_rows, key_cols);
  for (int r = 0; r < query_rows; ++r) {
    double* row = m.row_ptr(r);
    for (int c = 0; c < key_cols; ++c) row[c] = valid[static_cast<size_t>(c)] ? 0.0 : kMaskedScore;
  }
  return m;
}

Mat causal_mask(int steps) {
  Mat m(steps, steps);
  for (int r = 0; r < steps; ++r)
    for (int c = 0; c < steps; ++c) m.at(r, c) = c > r ? kMaskedScore : 0.0;
  return m;
}

}  // namespace

ad::NodeId Model::encoder_forward(ad::Tape& tape, const std::vector<TokenId>& padded_tokens,
                                  int real_len) {
  const int t = static_cast<int>(padded_tokens.size());
  std::vector<bool> valid(static_cast<size_t>(t), false);
  for (int i = 0; i < real_len; ++i) valid[static_cast<size_t>(i)] = true;
  const Mat mask = key_mask(t, t, valid);

  ad::NodeId x = embed(tape, padded_tokens);
  for (auto& layer : enc_layers_) {
    const ad::NodeId h1 =
        tape.layer_norm(x, tape.param(layer.ln1.gain), tape.param(layer.ln1.bias));
    x = tape.add(x, attention_block(tape, layer.attn, h1, h1, &mask, nullptr));
    const ad::NodeId h2 =
        tape.layer_norm(x, tape.param(layer.ln2.gain), tape.param(layer.ln2.bias));
    ad::NodeId ff =
        tape.add_rowvec(tape.matmul(h2, tape.param(layer.ffn.w1)), tape.param(layer.ffn.b1));
    ff = tape.gelu(ff);
    ff = tape.add_rowvec(tape.matmul(ff, tape.param(layer.ffn.w2)), tape.param(layer.ffn.b2));
    x = tape.add(x, ff);
  }
  return tape.layer_norm(x, tape.param(enc_final_ln_.gain), tape.param(enc_final_ln_.bias));
}

Model::Encoded Model::encode_segments(ad::Tape& tape, const std::vector<Segment>& segs,
                                      int min_padded_len) {
  if (segs.empty()) throw ValidationError("encode_segments: no segments");
  Encoded enc;
  int padded = min_padded_len;
  for (const auto& seg : segs) {
    const int len = static_cast<int>(seg.framed_tokens.size());
    if (len > cfg_.max_positions)
      throw ShapeError("segment framed length " + std::to_string(len) +
                       " exceeds max_positions " + std::to_string(cfg_.max_positions));
    padded = std::max(padded, len);
  }
  if (padded > cfg_.max_positions) throw ShapeError("padded length exceeds max_positions");
  enc.padded_len = padded;
  for (const auto& seg : segs) {
    std::vector<TokenId> tokens = seg.framed_tokens;
    tokens.resize(static_cast<size_t>(padded), Vocab::kPad);
    enc.real_len.push_back(static_cast<int>(seg.framed_tokens.size()));
    enc.segments.push_back(encoder_forward(tape, tokens, enc.real_len.back()));
  }
  return enc;
}

ad::NodeId Model::decoder_forward(ad::Tape& tape, const std::vector<TokenId>& prefix,
                                  ad::NodeId memory, const Mat* cross_mask,
                                  std::vector<ad::NodeId>* cross_attns) {
  if (prefix.empty()) throw ValidationError("decoder prefix must be non-empty");
  if (prefix[0] != Vocab::kBos) throw ValidationError("decoder prefix must begin with BOS");
  if (static_cast<int>(prefix.size()) > cfg_.max_positions)
    throw ShapeError("decoder prefix exceeds max_positions");

  const Mat self_mask = causal_mask(static_cast<int>(prefix.size()));
  ad::NodeId x = embed(tape, prefix);
  for (auto& layer : dec_layers_) {
    const ad::NodeId h1 =
        tape.layer_norm(x, tape.param(layer.ln1.gain), tape.param(layer.ln1.bias));
    x = tape.add(x, attention_block(tape, layer.self_attn, h1, h1, &self_mask, nullptr));
    const ad::NodeId h2 =
        tape.layer_norm(x, tape.param(layer.ln2.gain), tape.param(layer.ln2.bias));
    ad::NodeId attn_node = -1;
    x = tape.add(x, attention_block(tape, layer.cross_attn, h2, memory, cross_mask,
                                    cross_attns != nullptr ? &attn_node : nullptr));
    if (cross_attns != nullptr) cross_attns->push_back(attn_node);
    const ad::NodeId h3 =
        tape.layer_norm(x, tape.param(layer.ln3.gain), tape.param(layer.ln3.bias));
    ad::NodeId ff =
        tape.add_rowvec(tape.matmul(h3, tape.param(layer.ffn.w1)), tape.param(layer.ffn.b1));
    ff = tape.gelu(ff);
    ff = tape.add_rowvec(tape.matmul(ff, tape.param(layer.ffn.w2)), tape.param(layer.ffn.b2));
    x = tape.add(x, ff);
  }
  return tape.layer_norm(x, tape.param(dec_final_ln_.gain), tape.param(dec_final_ln_.bias));
}

ad::NodeId Model::output_logits(ad::Tape& tape, ad::NodeId dec_out, bool ltr_head) {
  if (ltr_head && cfg_.untied_ltr_head) {
    ad::NodeId h = tape.add_rowvec(tape.matmul(dec_out, tape.param(untied_head_.w1)),
                                   tape.param(untied_head_.b1));
    h = tape.gelu(h);
    return tape.add_rowvec(tape.matmul(h, tape.param(untied_head_.w2)),
                           tape.param(untied_head_.b2));
  }
  return tape.add_rowvec(tape.matmul(dec_out, tape.param(out_proj_)), tape.param(out_bias_));
}

Model::GenerationOut Model::generation_forward(ad::Tape& tape, const Encoded& enc,
                                               const std::vector<TokenId>& prefix) {
  const int m = static_cast<int>(enc.segments.size());
  const int mem_len = m * enc.padded_len;
  std::vector<bool> valid(static_cast<size_t>(mem_len), false);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < enc.real_len[static_cast<size_t>(i)]; ++j)
      valid[static_cast<size_t>(i * enc.padded_len + j)] = true;

  const ad::NodeId memory = tape.concat_rows(enc.segments);
  const Mat cross = key_mask(static_cast<int>(prefix.size()), mem_len, valid);

  std::vector<ad::NodeId> cross_attns;
  const ad::NodeId dec_out = decoder_forward(tape, prefix, memory, &cross, &cross_attns);

  GenerationOut out;
  out.logits = output_logits(tape, dec_out, false);
  ad::NodeId acc = cross_attns[0];
  for (size_t i = 1; i < cross_attns.size(); ++i) acc = tape.add(acc, cross_attns[i]);
  out.cross_attention = tape.scale(acc, 1.0 / static_cast<double>(cross_attns.size()));
  return out;
}

Model::LtrOut Model::ltr_forward(ad::Tape& tape, const Encoded& enc) {
  const std::vector<TokenId> bos_prefix{Vocab::kBos};
  std::vector<ad::NodeId> score_entries;
  std::vector<ad::NodeId> logit_rows;
  for (size_t i = 0; i < enc.segments.size(); ++i) {
    ad::NodeId memory;
    Mat mask;
    const Mat* mask_ptr = nullptr;
    if (cfg_.ltr_full_segment) {
      memory = enc.segments[i];
      std::vector<bool> valid(static_cast<size_t>(enc.padded_len), false);
      for (int j = 0; j < enc.real_len[i]; ++j) valid[static_cast<size_t>(j)] = true;
      mask = key_mask(1, enc.padded_len, valid);
      mask_ptr = &mask;
    } else {
      // the <s> position of the segment encoding is the whole memory
      memory = tape.slice_rows(enc.segments[i], 0, 1);
    }
    const ad::NodeId dec_out = decoder_forward(tape, bos_prefix, memory, mask_ptr, nullptr);
    const ad::NodeId logits = output_logits(tape, dec_out, true);
    logit_rows.push_back(logits);
    score_entries.push_back(tape.entry(logits, 0, Vocab::kExtra));
  }
  LtrOut out;
  out.scores = tape.concat_rows(score_entries);
  out.logits = tape.concat_rows(logit_rows);
  return out;
}

Model::JointOut Model::build_joint_loss(ad::Tape& tape, const DocBatch& doc, double lambda) {
  if (doc.summary.empty()) throw ValidationError("document batch needs a reference summary");
  if (doc.ranking_target.size() != doc.segments.size())
    throw ShapeError("ranking target length must match segment count");

  std::vector<TokenId> prefix{Vocab::kBos};
  prefix.insert(prefix.end(), doc.summary.begin(), doc.summary.end());
  std::vector<int> targets(doc.summary.begin(), doc.summary.end());
  targets.push_back(Vocab::kSep);

  const Encoded enc = encode_segments(tape, doc.segments);
  const GenerationOut gen = generation_forward(tape, enc, prefix);
  const ad::NodeId gen_ce = tape.generation_cross_entropy(gen.logits, targets, Vocab::kPad);

  double mass = 0.0;
  for (double y : doc.ranking_target) mass += y;

  JointOut out{gen_ce, {}};
  out.values.gen = tape.value(gen_ce).data[0];
  if (lambda > 0.0 && mass > 0.0) {
    const LtrOut ltr = ltr_forward(tape, enc);
    const ad::NodeId ltr_ce =
        tape.listwise_softmax_ce(ltr.scores, doc.ranking_target, doc.normalize_targets);
    out.joint = tape.add_scaled(gen_ce, ltr_ce, lambda);
    out.values.ltr = tape.value(ltr_ce).data[0];
    out.values.ltr_active = true;
  }
  out.values.joint = tape.value(out.joint).data[0];

  if (!std::isfinite(out.values.gen))
    throw RuntimeFailure("non-finite generation loss");
  if (!std::isfinite(out.values.ltr)) throw RuntimeFailure("non-finite LTR loss");
  return out;
}

Model::LossBreakdown Model::compute_loss(const DocBatch& doc, double lambda) {
  ad::Tape tape;
  return build_joint_loss(tape, doc, lambda).values;
}

Model::LossBreakdown Model::backward(const DocBatch& doc, double lambda) {
  ad::Tape tape;
  const JointOut out = build_joint_loss(tape, doc, lambda);
  tape.backward(out.joint);
  return out.values;
}

ForwardTrace Model::forward_trace(const std::vector<Segment>& segs,
                                  const std::vector<TokenId>& prefix) {
  ad::Tape tape;
  const Encoded enc = encode_segments(tape, segs);
  const GenerationOut gen = generation_forward(tape, enc, prefix);
  const LtrOut ltr = ltr_forward(tape, enc);

  ForwardTrace trace;
  trace.padded_len = enc.padded_len;
  trace.seg_real_len = enc.real_len;
  for (ad::NodeId id : enc.segments) trace.segment_encodings.push_back(tape.value(id));
  trace.segment_bos = Mat(static_cast<int>(segs.size()), cfg_.d_model);
  for (size_t i = 0; i < enc.segments.size(); ++i) {
    const Mat& seg_enc = tape.value(enc.segments[i]);
    std::copy(seg_enc.row_ptr(0), seg_enc.row_ptr(0) + cfg_.d_model,
              trace.segment_bos.row_ptr(static_cast<int>(i)));
  }
  trace.generation_logits = tape.value(gen.logits);
  trace.cross_attention = tape.value(gen.cross_attention);
  trace.ltr_logits = tape.value(ltr.logits);
  const Mat& scores = tape.value(ltr.scores);
  trace.ltr_scores.assign(scores.data.begin(), scores.data.end());
  return trace;
}

std::vector<double> Model::ltr_scores(const std::vector<Segment>& segs) {
  ad::Tape tape;
  const Encoded enc = encode_segments(tape, segs);
  const LtrOut ltr = ltr_forward(tape, enc);
  return tape.value(ltr.scores).data;
}

std::vector<TokenId> Model::greedy_decode(const std::vector<Segment>& segs, int max_len) {
  std::vector<TokenId> prefix{Vocab::kBos};
  std::vector<TokenId> out;
  for (int step = 0; step < max_len; ++step) {
    ad::Tape tape;
    const Encoded enc = encode_segments(tape, segs);
    const GenerationOut gen = generation_forward(tape, enc, prefix);
    const Mat& logits = tape.value(gen.logits);
    const int last = logits.rows - 1;
    int best = 0;
    double best_score = logits.at(last, 0);
    for (int vtok = 1; vtok < logits.cols; ++vtok) {
      if (logits.at(last, vtok) > best_score) {
        best_score = logits.at(last, vtok);
        best = vtok;
      }
    }
    if (best == Vocab::kSep) break;
    out.push_back(best);
    prefix.push_back(best);
    if (static_cast<int>(prefix.size()) >= cfg_.max_positions) break;
  }
  return out;
}

}  // namespace ltrsum
