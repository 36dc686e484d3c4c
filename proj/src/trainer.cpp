// SPDX-License-Identifier: Apache-2.0
#include "ltrsum/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <thread>
#include <unordered_map>

#include <json.hpp>

#include "ltrsum/errors.hpp"
#include "ltrsum/eval.hpp"
#include "ltrsum/losses.hpp"
#include "ltrsum/rng.hpp"

using nlohmann::json;

namespace ltrsum {

void TrainConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be >= 0");
  if (threshold < 0.0 || threshold > 1.0) throw ConfigError("threshold must be in [0, 1]");
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be > 0");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (optimizer != "adam" && optimizer != "sgd") throw ConfigError("optimizer must be adam or sgd");
  if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
  if (ndcg_k < 1) throw ConfigError("ndcg_k must be >= 1");
  if (eval_fraction < 0.0 || eval_fraction >= 1.0)
    throw ConfigError("eval_fraction must be in [0, 1)");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (decode_max_len < 1) throw ConfigError("decode_max_len must be >= 1");
  segmentation.validate();
}

uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<int> heldout_split(const std::vector<Document>& docs, double fraction) {
  std::vector<int> order(docs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const uint64_t ha = fnv1a64(docs[static_cast<size_t>(a)].doc_id);
    const uint64_t hb = fnv1a64(docs[static_cast<size_t>(b)].doc_id);
    if (ha != hb) return ha < hb;
    return docs[static_cast<size_t>(a)].doc_id < docs[static_cast<size_t>(b)].doc_id;
  });
  const int k = static_cast<int>(std::lround(fraction * static_cast<double>(docs.size())));
  std::vector<int> heldout(order.begin(), order.begin() + k);
  std::sort(heldout.begin(), heldout.end());
  return heldout;
}

Trainer::Trainer(Corpus corpus, const ModelConfig& model_cfg, const TrainConfig& cfg)
    : corpus_(std::move(corpus)), cfg_(cfg) {
  cfg_.validate();
  ModelConfig mc = model_cfg;
  if (mc.vocab_size == 0) mc.vocab_size = corpus_.vocab.size();
  if (mc.vocab_size != corpus_.vocab.size())
    throw ValidationError("model vocab_size does not match corpus vocabulary");
  model_ = std::make_unique<Model>(mc);
  state_.optimizer = cfg_.optimizer;
  prepare_docs();
}

Trainer::Trainer(Corpus corpus, LoadedCheckpoint resume, const TrainConfig& cfg)
    : corpus_(std::move(corpus)), cfg_(cfg), model_(std::move(resume.model)),
      state_(std::move(resume.state)) {
  cfg_.validate();
  if (model_->config().vocab_size != corpus_.vocab.size())
    throw ValidationError("checkpoint vocab does not match corpus vocabulary");
  if (state_.optimizer == "none") state_.optimizer = cfg_.optimizer;
  if (state_.optimizer != cfg_.optimizer)
    throw ValidationError("checkpoint optimizer '" + state_.optimizer +
                          "' differs from configured '" + cfg_.optimizer + "'");
  prepare_docs();
}

void Trainer::prepare_docs() {
  if (corpus_.docs.empty()) throw ValidationError("training corpus is empty");
  for (const auto& doc : corpus_.docs) {
    if (!doc.reference_summary || doc.reference_summary->empty())
      throw ValidationError("document '" + doc.doc_id +
                            "' lacks a reference summary required for training");
  }
  heldout_ = heldout_split(corpus_.docs, cfg_.eval_fraction);
  std::vector<bool> is_heldout(corpus_.docs.size(), false);
  for (int i : heldout_) is_heldout[static_cast<size_t>(i)] = true;

  for (size_t i = 0; i < corpus_.docs.size(); ++i) {
    if (is_heldout[i]) continue;
    const Document& doc = corpus_.docs[i];
    PreparedDoc pd;
    pd.corpus_index = static_cast<int>(i);
    pd.batch.segments = segment_document(doc, cfg_.segmentation);
    const RelevanceLabelSet labels = label_document(doc, pd.batch.segments, cfg_.threshold);
    pd.gold_labels = labels.labels;
    pd.batch.ranking_target.assign(labels.labels.begin(), labels.labels.end());
    pd.batch.summary = *doc.reference_summary;
    pd.batch.normalize_targets = cfg_.normalize_targets;
    if (labels.all_zero()) ++skipped_unlabeled_;
    train_docs_.push_back(std::move(pd));
  }
  if (train_docs_.empty()) throw ValidationError("no training documents after held-out split");
}

namespace {

double global_grad_norm(const std::vector<ad::Param*>& params) {
  double sq = 0.0;
  for (const ad::Param* p : params)
    for (double g : p->grad.data) sq += g * g;
  return std::sqrt(sq);
}

}  // namespace

void Trainer::apply_update(int batch_docs) {
  auto& params = model_->parameters();
  const double inv_batch = 1.0 / static_cast<double>(batch_docs);
  for (ad::Param* p : params)
    for (double& g : p->grad.data) g *= inv_batch;

  if (cfg_.clip_norm > 0.0) {
    const double norm = global_grad_norm(params);
    if (norm > cfg_.clip_norm) {
      const double scale = cfg_.clip_norm / norm;
      for (ad::Param* p : params)
        for (double& g : p->grad.data) g *= scale;
    }
  }

  state_.step += 1;
  if (state_.optimizer == "sgd") {
    for (ad::Param* p : params)
      for (size_t i = 0; i < p->value.numel(); ++i)
        p->value.data[i] -= cfg_.learning_rate * p->grad.data[i];
    return;
  }

  // adam
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  if (state_.adam_m.empty()) {
    for (const ad::Param* p : params) {
      state_.adam_m.emplace_back(p->value.rows, p->value.cols);
      state_.adam_v.emplace_back(p->value.rows, p->value.cols);
    }
  }
  const double t = static_cast<double>(state_.step);
  const double bc1 = 1.0 - std::pow(beta1, t);
  const double bc2 = 1.0 - std::pow(beta2, t);
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Mat& m = state_.adam_m[pi];
    Mat& v = state_.adam_v[pi];
    ad::Param& p = *params[pi];
    for (size_t i = 0; i < p.value.numel(); ++i) {
      const double g = p.grad.data[i];
      m.data[i] = beta1 * m.data[i] + (1.0 - beta1) * g;
      v.data[i] = beta2 * v.data[i] + (1.0 - beta2) * g * g;
      const double mhat = m.data[i] / bc1;
      const double vhat = v.data[i] / bc2;
      p.value.data[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

void Trainer::compute_batch_gradients(const std::vector<size_t>& order, size_t pos, size_t end,
                                      std::vector<Model::LossBreakdown>& losses) {
  if (cfg_.workers <= 1 || end - pos <= 1) {
    for (size_t k = pos; k < end; ++k)
      losses[k - pos] = model_->backward(train_docs_[order[k]].batch, cfg_.lambda);
    return;
  }
  // worker shards accumulate into private buffers, reduced in fixed order
  const int w = std::min<int>(cfg_.workers, static_cast<int>(end - pos));
  std::vector<std::vector<Mat>> shard_grads(static_cast<size_t>(w));
  std::vector<std::exception_ptr> errors(static_cast<size_t>(w));
  auto& params = model_->parameters();
  std::vector<std::thread> threads;
  for (int t = 0; t < w; ++t) {
    threads.emplace_back([&, t]() {
      try {
        auto& grads = shard_grads[static_cast<size_t>(t)];
        for (const ad::Param* p : params) grads.emplace_back(p->value.rows, p->value.cols);
        std::unordered_map<const ad::Param*, Mat*> sinks;
        for (size_t pi = 0; pi < params.size(); ++pi) sinks[params[pi]] = &grads[pi];
        for (size_t k = pos + static_cast<size_t>(t); k < end; k += static_cast<size_t>(w)) {
          ad::Tape tape;
          const auto out =
              model_->build_joint_loss(tape, train_docs_[order[k]].batch, cfg_.lambda);
          tape.backward_into(out.joint, sinks);
          losses[k - pos] = out.values;
        }
      } catch (...) {
        errors[static_cast<size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  for (int t = 0; t < w; ++t) {
    for (size_t pi = 0; pi < params.size(); ++pi) {
      auto& dst = params[pi]->grad;
      const auto& src = shard_grads[static_cast<size_t>(t)][pi];
      for (size_t i = 0; i < dst.numel(); ++i) dst.data[i] += src.data[i];
    }
  }
}

EpochMetrics Trainer::run_epoch(int epoch) {
  std::vector<size_t> order(train_docs_.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(Rng::mix(cfg_.seed, static_cast<uint64_t>(epoch)));
  shuffle_rng.shuffle(order);

  double gen_sum = 0.0, ltr_sum = 0.0, joint_sum = 0.0;
  int docs_seen = 0;

  const auto divergence_hint = [this]() {
    return cfg_.checkpoint_out.empty()
               ? std::string("; no checkpoint configured")
               : "; last good checkpoint: " + cfg_.checkpoint_out + " (epoch " +
                     std::to_string(state_.epochs_completed) + ")";
  };

  for (size_t pos = 0; pos < order.size(); pos += static_cast<size_t>(cfg_.batch_size)) {
    const size_t end = std::min(order.size(), pos + static_cast<size_t>(cfg_.batch_size));
    model_->zero_grads();

    std::vector<Model::LossBreakdown> losses(end - pos);
    try {
      compute_batch_gradients(order, pos, end, losses);
    } catch (const RuntimeFailure& e) {
      throw RuntimeFailure("training diverged: " + std::string(e.what()) + divergence_hint());
    }

    for (const auto& lb : losses) {
      gen_sum += lb.gen;
      ltr_sum += lb.ltr;
      joint_sum += lb.joint;
      ++docs_seen;
      if (!std::isfinite(lb.joint))
        throw RuntimeFailure("training diverged (non-finite joint loss)" + divergence_hint());
    }
    apply_update(static_cast<int>(end - pos));
  }

  EpochMetrics em;
  em.epoch = epoch;
  em.gen_loss = gen_sum / docs_seen;
  em.ltr_loss = ltr_sum / docs_seen;
  em.joint_loss = joint_sum / docs_seen;
  return em;
}

TrainReport Trainer::run() {
  const auto t0 = std::chrono::steady_clock::now();
  TrainReport report;
  report.train_docs = static_cast<int>(train_docs_.size());
  report.heldout_docs = static_cast<int>(heldout_.size());
  report.skipped_unlabeled = skipped_unlabeled_;

  for (int epoch = state_.epochs_completed + 1; epoch <= cfg_.epochs; ++epoch) {
    EpochMetrics em = run_epoch(epoch);
    state_.epochs_completed = epoch;

    const bool eval_now =
        !heldout_.empty() && (epoch % cfg_.eval_every == 0 || epoch == cfg_.epochs);
    if (eval_now) {
      const EvalReport ev = evaluate_heldout();
      em.ndcg_ltr = ev.mean_ndcg_ltr;
      em.ndcg_attention = ev.mean_ndcg_attention;
      em.rouge1_f1 = ev.mean_rouge1_f1;
      em.rouge2_f1 = ev.mean_rouge2_f1;
      em.rougeL_f1 = ev.mean_rougeL_f1;
    }
    report.epochs.push_back(em);

    if (!cfg_.checkpoint_out.empty())
      save_checkpoint(cfg_.checkpoint_out, *model_, corpus_.vocab, state_);
  }

  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

EvalReport Trainer::evaluate_heldout() {
  std::vector<Document> docs;
  for (int i : heldout_) docs.push_back(corpus_.docs[static_cast<size_t>(i)]);
  return evaluate_model(*model_, docs, cfg_);
}

EvalReport evaluate_model(Model& model, const std::vector<Document>& docs,
                          const TrainConfig& cfg) {
  if (docs.empty()) throw ValidationError("evaluation set is empty");
  EvalReport report;
  double ndcg_ltr_sum = 0.0, ndcg_attn_sum = 0.0;
  double r1 = 0.0, r2 = 0.0, rl = 0.0;
  int rouge_docs = 0;

  for (const auto& doc : docs) {
    EvalReport::PerDoc pd;
    pd.doc_id = doc.doc_id;
    const auto segs = segment_document(doc, cfg.segmentation);
    const RelevanceLabelSet labels = label_document(doc, segs, cfg.threshold);

    const std::vector<TokenId> decoded = model.greedy_decode(segs, cfg.decode_max_len);

    if (!labels.all_zero()) {
      const int m = static_cast<int>(segs.size());
      const int k = std::min(cfg.ndcg_k, m);
      const RankedList by_ltr = rank_by_ltr(model, segs);
      pd.ndcg_ltr = ndcg(by_ltr, labels.labels, k);

      // attention collected while generating the system summary
      std::vector<TokenId> prefix{Vocab::kBos};
      prefix.insert(prefix.end(), decoded.begin(), decoded.end());
      const ForwardTrace trace = model.forward_trace(segs, prefix);
      const RankedList by_attn = rank_by_attention(trace, segs);
      pd.ndcg_attention = ndcg(by_attn, labels.labels, k);

      ndcg_ltr_sum += *pd.ndcg_ltr;
      ndcg_attn_sum += *pd.ndcg_attention;
      ++report.ndcg_docs;
    }

    if (doc.reference_summary && !doc.reference_summary->empty()) {
      pd.rouge1_f1 = rouge(decoded, *doc.reference_summary, RougeVariant::kRouge1).f1;
      pd.rouge2_f1 = rouge(decoded, *doc.reference_summary, RougeVariant::kRouge2).f1;
      pd.rougeL_f1 = rouge(decoded, *doc.reference_summary, RougeVariant::kRougeL).f1;
      r1 += pd.rouge1_f1;
      r2 += pd.rouge2_f1;
      rl += pd.rougeL_f1;
      ++rouge_docs;
    }
    report.docs.push_back(std::move(pd));
  }

  if (report.ndcg_docs > 0) {
    report.mean_ndcg_ltr = ndcg_ltr_sum / report.ndcg_docs;
    report.mean_ndcg_attention = ndcg_attn_sum / report.ndcg_docs;
  }
  if (rouge_docs > 0) {
    report.mean_rouge1_f1 = r1 / rouge_docs;
    report.mean_rouge2_f1 = r2 / rouge_docs;
    report.mean_rougeL_f1 = rl / rouge_docs;
  }
  return report;
}

std::pair<std::unique_ptr<Model>, TrainReport> train(Corpus corpus, const ModelConfig& model_cfg,
                                                     const TrainConfig& cfg) {
  Trainer trainer(std::move(corpus), model_cfg, cfg);
  TrainReport report = trainer.run();
  return {trainer.release_model(), std::move(report)};
}

std::string TrainReport::metrics_jsonl() const {
  std::string out;
  for (const auto& em : epochs) {
    json rec;
    rec["epoch"] = em.epoch;
    rec["gen_loss"] = em.gen_loss;
    rec["ltr_loss"] = em.ltr_loss;
    rec["joint_loss"] = em.joint_loss;
    if (em.ndcg_ltr) rec["ndcg_ltr"] = *em.ndcg_ltr;
    if (em.ndcg_attention) rec["ndcg_attention"] = *em.ndcg_attention;
    if (em.rouge1_f1) rec["rouge1_f1"] = *em.rouge1_f1;
    if (em.rouge2_f1) rec["rouge2_f1"] = *em.rouge2_f1;
    if (em.rougeL_f1) rec["rougeL_f1"] = *em.rougeL_f1;
    out += rec.dump();
    out += '\n';
  }
  return out;
}

std::string EvalReport::to_json() const {
  json rep;
  rep["mean_ndcg_ltr"] = mean_ndcg_ltr;
  rep["mean_ndcg_attention"] = mean_ndcg_attention;
  rep["mean_rouge1_f1"] = mean_rouge1_f1;
  rep["mean_rouge2_f1"] = mean_rouge2_f1;
  rep["mean_rougeL_f1"] = mean_rougeL_f1;
  rep["ndcg_docs"] = ndcg_docs;
  json per_doc = json::array();
  for (const auto& pd : docs) {
    json d;
    d["doc_id"] = pd.doc_id;
    if (pd.ndcg_ltr) d["ndcg_ltr"] = *pd.ndcg_ltr;
    if (pd.ndcg_attention) d["ndcg_attention"] = *pd.ndcg_attention;
    d["rouge1_f1"] = pd.rouge1_f1;
    d["rouge2_f1"] = pd.rouge2_f1;
    d["rougeL_f1"] = pd.rougeL_f1;
    per_doc.push_back(std::move(d));
  }
  rep["per_doc"] = std::move(per_doc);
  return rep.dump(2);
}

}  // namespace ltrsum
