// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ltrsum/checkpoint.hpp"
#include "ltrsum/corpus.hpp"
#include "ltrsum/labeling.hpp"
#include "ltrsum/nnmodel.hpp"
#include "ltrsum/segmenter.hpp"

namespace ltrsum {

struct TrainConfig {
  double lambda = 1.0;      // LTR loss weight
  double threshold = 0.4;   // span probability cutoff for labeling
  double learning_rate = 3e-3;
  int epochs = 30;
  int batch_size = 8;  // documents per update
  uint64_t seed = 0;
  std::string optimizer = "adam";  // "adam" | "sgd"
  double clip_norm = 1.0;          // global gradient norm; <= 0 disables
  int eval_every = 5;              // held-out metrics cadence (epochs)
  int ndcg_k = 5;
  double eval_fraction = 0.2;  // held-out share, selected by doc_id hash
  bool normalize_targets = true;
  int workers = 1;
  int decode_max_len = 32;
  SegmentationConfig segmentation;
  // saved at each epoch end when set; named on divergence aborts
  std::string checkpoint_out;

  void validate() const;
};

struct EpochMetrics {
  int epoch = 0;
  double gen_loss = 0.0;
  double ltr_loss = 0.0;
  double joint_loss = 0.0;
  std::optional<double> ndcg_ltr;
  std::optional<double> ndcg_attention;
  std::optional<double> rouge1_f1;
  std::optional<double> rouge2_f1;
  std::optional<double> rougeL_f1;
};

struct TrainReport {
  std::vector<EpochMetrics> epochs;
  int train_docs = 0;
  int heldout_docs = 0;
  int skipped_unlabeled = 0;  // documents with all-zero relevance labels
  double wall_time_s = 0.0;   // informational; not part of the metrics log

  // One JSON object per epoch; byte-stable across identical runs, so it
  // deliberately excludes wall time.
  std::string metrics_jsonl() const;
};

struct EvalReport {
  struct PerDoc {
    std::string doc_id;
    std::optional<double> ndcg_ltr;
    std::optional<double> ndcg_attention;
    double rouge1_f1 = 0.0;
    double rouge2_f1 = 0.0;
    double rougeL_f1 = 0.0;
  };
  std::vector<PerDoc> docs;
  double mean_ndcg_ltr = 0.0;
  double mean_ndcg_attention = 0.0;
  double mean_rouge1_f1 = 0.0;
  double mean_rouge2_f1 = 0.0;
  double mean_rougeL_f1 = 0.0;
  int ndcg_docs = 0;  // docs with gold mass, i.e. where nDCG is defined

  std::string to_json() const;
};

// Joint training loop: segment, label, two-pass forward, joint loss,
// update. Deterministic for a fixed seed in single-worker mode; with
// worker shards, deterministic per worker count via fixed-order
// gradient reduction.
class Trainer {
 public:
  Trainer(Corpus corpus, const ModelConfig& model_cfg, const TrainConfig& cfg);
  // resume from a checkpoint produced by an identical configuration
  Trainer(Corpus corpus, LoadedCheckpoint resume, const TrainConfig& cfg);

  // Runs epochs [state.epochs_completed + 1, cfg.epochs].
  TrainReport run();

  Model& model() { return *model_; }
  std::unique_ptr<Model> release_model() { return std::move(model_); }
  const Vocab& vocab() const { return corpus_.vocab; }
  const TrainerState& state() const { return state_; }

  EvalReport evaluate_heldout();

  const std::vector<int>& heldout_indices() const { return heldout_; }

 private:
  struct PreparedDoc {
    int corpus_index = 0;
    Model::DocBatch batch;
    std::vector<int> gold_labels;
  };

  void prepare_docs();
  void compute_batch_gradients(const std::vector<size_t>& order, size_t pos, size_t end,
                               std::vector<Model::LossBreakdown>& losses);
  void apply_update(int batch_docs);
  EpochMetrics run_epoch(int epoch);

  Corpus corpus_;
  TrainConfig cfg_;
  std::unique_ptr<Model> model_;
  TrainerState state_;
  std::vector<PreparedDoc> train_docs_;
  std::vector<int> heldout_;  // corpus indices
  int skipped_unlabeled_ = 0;
};

// Convenience wrappers mirroring the operation-level API.
std::pair<std::unique_ptr<Model>, TrainReport> train(Corpus corpus, const ModelConfig& model_cfg,
                                                     const TrainConfig& cfg);

// Metrics for an already-trained model over a document set.
EvalReport evaluate_model(Model& model, const std::vector<Document>& docs,
                          const TrainConfig& cfg);

// Deterministic held-out selection: documents ordered by FNV-1a hash of
// doc_id, first round(fraction * n) are held out.
std::vector<int> heldout_split(const std::vector<Document>& docs, double fraction);

uint64_t fnv1a64(const std::string& s);

}  // namespace ltrsum
