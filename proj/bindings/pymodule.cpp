// SPDX-License-Identifier: Apache-2.0
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ltrsum/checkpoint.hpp"
#include "ltrsum/corpus.hpp"
#include "ltrsum/errors.hpp"
#include "ltrsum/eval.hpp"
#include "ltrsum/labeling.hpp"
#include "ltrsum/losses.hpp"
#include "ltrsum/nnmodel.hpp"
#include "ltrsum/segmenter.hpp"
#include "ltrsum/trainer.hpp"

namespace py = pybind11;
using namespace ltrsum;

namespace {

std::vector<std::vector<double>> mat_to_rows(const Mat& m) {
  std::vector<std::vector<double>> rows(static_cast<size_t>(m.rows));
  for (int r = 0; r < m.rows; ++r)
    rows[static_cast<size_t>(r)].assign(m.row_ptr(r), m.row_ptr(r) + m.cols);
  return rows;
}

}  // namespace

PYBIND11_MODULE(_ltrsum, m) {
  m.doc() = "LTR-assisted query-focused summarization: segmentation, span-probability "
            "relevance labeling, joint generation + listwise ranking training, and "
            "nDCG/ROUGE evaluation.";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<RuntimeFailure>(m, "RuntimeFailure", PyExc_RuntimeError);

  // corpus
  py::class_<Vocab>(m, "Vocab")
      .def(py::init<>())
      .def(py::init<const std::vector<std::string>&>())
      .def("add", &Vocab::add)
      .def("id_of", &Vocab::id_of)
      .def("token_of", &Vocab::token_of)
      .def("size", &Vocab::size)
      .def_property_readonly("tokens", &Vocab::tokens)
      .def_readonly_static("BOS", &Vocab::kBos)
      .def_readonly_static("SEP", &Vocab::kSep)
      .def_readonly_static("PAD", &Vocab::kPad)
      .def_readonly_static("UNK", &Vocab::kUnk)
      .def_readonly_static("EXTRA", &Vocab::kExtra);

  py::class_<SpanAlignment>(m, "SpanAlignment")
      .def(py::init([](int start, int len, double p) {
             return SpanAlignment{start, len, p};
           }),
           py::arg("start"), py::arg("len"), py::arg("p"))
      .def_readwrite("start", &SpanAlignment::source_start)
      .def_readwrite("len", &SpanAlignment::span_len)
      .def_readwrite("p", &SpanAlignment::probability);

  py::class_<Document>(m, "Document")
      .def(py::init<>())
      .def_readwrite("doc_id", &Document::doc_id)
      .def_readwrite("query", &Document::query)
      .def_readwrite("source", &Document::source)
      .def_readwrite("reference_summary", &Document::reference_summary)
      .def_readwrite("alignments", &Document::alignments);

  py::class_<Corpus>(m, "Corpus")
      .def(py::init<>())
      .def_readwrite("vocab", &Corpus::vocab)
      .def_readwrite("docs", &Corpus::docs);

  py::class_<SynthConfig>(m, "SynthConfig")
      .def(py::init<>())
      .def_readwrite("doc_len", &SynthConfig::doc_len)
      .def_readwrite("gold_regions", &SynthConfig::gold_regions)
      .def_readwrite("gold_len_min", &SynthConfig::gold_len_min)
      .def_readwrite("gold_len_max", &SynthConfig::gold_len_max)
      .def_readwrite("distractor_spans", &SynthConfig::distractor_spans);

  m.def("tokenize", &tokenize, py::arg("text"), py::arg("vocab"));
  m.def("detokenize", &detokenize, py::arg("ids"), py::arg("vocab"));
  m.def("load_corpus", &load_corpus, py::arg("path"));
  m.def("load_corpus_with_vocab", &load_corpus_with_vocab, py::arg("path"), py::arg("vocab"));
  m.def("save_corpus", &save_corpus, py::arg("path"), py::arg("corpus"));
  m.def("generate_synthetic", &generate_synthetic, py::arg("seed"), py::arg("n_docs"),
        py::arg("cfg") = SynthConfig{});

  // segmenter
  py::class_<SegmentationConfig>(m, "SegmentationConfig")
      .def(py::init<>())
      .def_readwrite("window_len", &SegmentationConfig::window_len)
      .def_readwrite("stride", &SegmentationConfig::stride)
      .def_readwrite("max_segments", &SegmentationConfig::max_segments)
      .def_readwrite("query_max", &SegmentationConfig::query_max);

  py::class_<Segment>(m, "Segment")
      .def_readonly("index", &Segment::index)
      .def_readonly("framed_tokens", &Segment::framed_tokens)
      .def_readonly("source_start", &Segment::source_start)
      .def_readonly("source_end", &Segment::source_end);

  m.def("segment_document", &segment_document, py::arg("doc"), py::arg("cfg"));

  // labeling
  py::class_<RelevanceLabelSet>(m, "RelevanceLabelSet")
      .def_readonly("scores", &RelevanceLabelSet::scores)
      .def_readonly("labels", &RelevanceLabelSet::labels)
      .def_readonly("threshold_used", &RelevanceLabelSet::threshold_used)
      .def("all_zero", &RelevanceLabelSet::all_zero);

  m.def("score_segment", &score_segment, py::arg("segment"), py::arg("alignments"),
        py::arg("threshold"));
  m.def("assign_labels", &assign_labels, py::arg("scores"));
  m.def("label_document", &label_document, py::arg("doc"), py::arg("segments"),
        py::arg("threshold"));

  // losses
  m.def(
      "softmax_ce_listwise",
      [](const std::vector<double>& y, const std::vector<double>& y_hat, bool normalize) {
        return softmax_ce_listwise(RankingTarget{y, normalize}, RankingPrediction{y_hat});
      },
      py::arg("y"), py::arg("y_hat"), py::arg("normalize") = true);
  m.def(
      "softmax_ce_grad",
      [](const std::vector<double>& y, const std::vector<double>& y_hat, bool normalize) {
        return softmax_ce_grad(RankingTarget{y, normalize}, RankingPrediction{y_hat});
      },
      py::arg("y"), py::arg("y_hat"), py::arg("normalize") = true);
  m.def("generation_ce", &generation_ce, py::arg("logits"), py::arg("target"), py::arg("pad_id"));
  m.def(
      "joint_loss",
      [](double gen, double ltr, double lambda) { return joint_loss(gen, ltr, {lambda}); },
      py::arg("gen"), py::arg("ltr"), py::arg("lambda_") = 1.0);

  // model
  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("d_model", &ModelConfig::d_model)
      .def_readwrite("n_heads", &ModelConfig::n_heads)
      .def_readwrite("n_layers", &ModelConfig::n_layers)
      .def_readwrite("ffn_mult", &ModelConfig::ffn_mult)
      .def_readwrite("vocab_size", &ModelConfig::vocab_size)
      .def_readwrite("max_positions", &ModelConfig::max_positions)
      .def_readwrite("seed", &ModelConfig::seed)
      .def_readwrite("ltr_full_segment", &ModelConfig::ltr_full_segment)
      .def_readwrite("untied_ltr_head", &ModelConfig::untied_ltr_head);

  py::class_<ForwardTrace>(m, "ForwardTrace")
      .def_property_readonly(
          "generation_logits",
          [](const ForwardTrace& t) { return mat_to_rows(t.generation_logits); })
      .def_property_readonly(
          "cross_attention", [](const ForwardTrace& t) { return mat_to_rows(t.cross_attention); })
      .def_readonly("ltr_scores", &ForwardTrace::ltr_scores)
      .def_readonly("seg_real_len", &ForwardTrace::seg_real_len)
      .def_readonly("padded_len", &ForwardTrace::padded_len);

  py::class_<Model>(m, "Model")
      .def(py::init<const ModelConfig&>())
      .def_property_readonly("config", &Model::config)
      .def("ltr_scores", &Model::ltr_scores, py::arg("segments"))
      .def("greedy_decode", &Model::greedy_decode, py::arg("segments"), py::arg("max_len") = 32)
      .def("forward_trace", &Model::forward_trace, py::arg("segments"), py::arg("prefix"))
      .def("num_parameters", [](const Model& model) {
        size_t n = 0;
        for (const auto* p : model.parameters()) n += p->value.numel();
        return n;
      });

  // eval
  py::class_<RankedList>(m, "RankedList")
      .def_readonly("order", &RankedList::order)
      .def_readonly("scores", &RankedList::scores);

  m.def("dcg", [](const std::vector<int>& rel, int p) { return dcg(RelevanceVector{rel}, p); },
        py::arg("rel"), py::arg("p"));
  m.def(
      "ndcg",
      [](const std::vector<int>& order, const std::vector<double>& scores,
         const std::vector<int>& gold, int p) {
        return ndcg(RankedList{order, scores}, gold, p);
      },
      py::arg("order"), py::arg("scores"), py::arg("gold_labels"), py::arg("p"));
  m.def("rank_by_scores", &rank_by_scores, py::arg("scores"));
  m.def("rank_by_ltr", &rank_by_ltr, py::arg("model"), py::arg("segments"));
  m.def("rank_by_attention", &rank_by_attention, py::arg("trace"), py::arg("segments"));
  m.def(
      "greedy_match_relevance",
      [](const RankedList& pred, const std::vector<int>& gold) {
        return greedy_match_relevance(pred, gold).rel;
      },
      py::arg("pred"), py::arg("gold_labels"));
  m.def(
      "rouge",
      [](const std::vector<TokenId>& cand, const std::vector<TokenId>& ref,
         const std::string& variant) {
        RougeVariant v;
        if (variant == "1") v = RougeVariant::kRouge1;
        else if (variant == "2") v = RougeVariant::kRouge2;
        else if (variant == "L" || variant == "l") v = RougeVariant::kRougeL;
        else throw ValidationError("rouge variant must be one of '1', '2', 'L'");
        const RougeScore s = rouge(cand, ref, v);
        return py::make_tuple(s.precision, s.recall, s.f1);
      },
      py::arg("candidate"), py::arg("reference"), py::arg("variant"));

  // trainer
  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("lambda_", &TrainConfig::lambda)
      .def_readwrite("threshold", &TrainConfig::threshold)
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("optimizer", &TrainConfig::optimizer)
      .def_readwrite("clip_norm", &TrainConfig::clip_norm)
      .def_readwrite("eval_every", &TrainConfig::eval_every)
      .def_readwrite("ndcg_k", &TrainConfig::ndcg_k)
      .def_readwrite("eval_fraction", &TrainConfig::eval_fraction)
      .def_readwrite("normalize_targets", &TrainConfig::normalize_targets)
      .def_readwrite("workers", &TrainConfig::workers)
      .def_readwrite("decode_max_len", &TrainConfig::decode_max_len)
      .def_readwrite("segmentation", &TrainConfig::segmentation);

  py::class_<EpochMetrics>(m, "EpochMetrics")
      .def_readonly("epoch", &EpochMetrics::epoch)
      .def_readonly("gen_loss", &EpochMetrics::gen_loss)
      .def_readonly("ltr_loss", &EpochMetrics::ltr_loss)
      .def_readonly("joint_loss", &EpochMetrics::joint_loss)
      .def_readonly("ndcg_ltr", &EpochMetrics::ndcg_ltr)
      .def_readonly("ndcg_attention", &EpochMetrics::ndcg_attention);

  py::class_<TrainReport>(m, "TrainReport")
      .def_readonly("epochs", &TrainReport::epochs)
      .def_readonly("train_docs", &TrainReport::train_docs)
      .def_readonly("heldout_docs", &TrainReport::heldout_docs)
      .def_readonly("wall_time_s", &TrainReport::wall_time_s)
      .def("metrics_jsonl", &TrainReport::metrics_jsonl);

  py::class_<EvalReport>(m, "EvalReport")
      .def_readonly("mean_ndcg_ltr", &EvalReport::mean_ndcg_ltr)
      .def_readonly("mean_ndcg_attention", &EvalReport::mean_ndcg_attention)
      .def_readonly("mean_rouge1_f1", &EvalReport::mean_rouge1_f1)
      .def_readonly("mean_rouge2_f1", &EvalReport::mean_rouge2_f1)
      .def_readonly("mean_rougeL_f1", &EvalReport::mean_rougeL_f1)
      .def_readonly("ndcg_docs", &EvalReport::ndcg_docs)
      .def("to_json", &EvalReport::to_json);

  m.def(
      "train",
      [](const Corpus& corpus, const ModelConfig& mcfg, const TrainConfig& cfg) {
        auto [model, report] = train(corpus, mcfg, cfg);
        return py::make_tuple(py::cast(std::move(model)), report);
      },
      py::arg("corpus"), py::arg("model_cfg"), py::arg("train_cfg"));
  m.def("evaluate_model", &evaluate_model, py::arg("model"), py::arg("docs"), py::arg("cfg"));
  m.def(
      "save_checkpoint",
      [](const std::string& path, const Model& model, const Vocab& vocab) {
        save_checkpoint(path, model, vocab);
      },
      py::arg("path"), py::arg("model"), py::arg("vocab"));
  m.def(
      "load_checkpoint",
      [](const std::string& path) {
        LoadedCheckpoint ckpt = load_checkpoint(path);
        return py::make_tuple(py::cast(std::move(ckpt.model)), ckpt.vocab);
      },
      py::arg("path"));
}
