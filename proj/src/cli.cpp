// SPDX-License-Identifier: Apache-2.0
#include "ltrsum/cli.hpp"

#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ltrsum/checkpoint.hpp"
#include "ltrsum/corpus.hpp"
#include "ltrsum/errors.hpp"
#include "ltrsum/eval.hpp"
#include "ltrsum/labeling.hpp"
#include "ltrsum/nnmodel.hpp"
#include "ltrsum/segmenter.hpp"
#include "ltrsum/trainer.hpp"

using nlohmann::json;

namespace ltrsum {

namespace {

// data goes to --out when given, stdout otherwise
void emit(const std::string& out_path, const std::string& content) {
  if (out_path.empty()) {
    std::cout << content;
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write output file: " + out_path);
  out << content;
}

// key = value lines, '#' comments; flags override file values
void apply_config_file(const std::string& path, TrainConfig& cfg, ModelConfig& mcfg) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file: " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos)
        throw ParseError("config line " + std::to_string(line_no) + ": expected key = value");
      continue;
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "lambda") cfg.lambda = std::stod(value);
      else if (key == "threshold") cfg.threshold = std::stod(value);
      else if (key == "learning_rate") cfg.learning_rate = std::stod(value);
      else if (key == "epochs") cfg.epochs = std::stoi(value);
      else if (key == "batch_size") cfg.batch_size = std::stoi(value);
      else if (key == "seed") cfg.seed = std::stoull(value);
      else if (key == "optimizer") cfg.optimizer = value;
      else if (key == "clip_norm") cfg.clip_norm = std::stod(value);
      else if (key == "eval_every") cfg.eval_every = std::stoi(value);
      else if (key == "ndcg_k") cfg.ndcg_k = std::stoi(value);
      else if (key == "eval_fraction") cfg.eval_fraction = std::stod(value);
      else if (key == "normalize_targets") cfg.normalize_targets = value == "true" || value == "1";
      else if (key == "workers") cfg.workers = std::stoi(value);
      else if (key == "decode_max_len") cfg.decode_max_len = std::stoi(value);
      else if (key == "window_len") cfg.segmentation.window_len = std::stoi(value);
      else if (key == "stride") cfg.segmentation.stride = std::stoi(value);
      else if (key == "max_segments") cfg.segmentation.max_segments = std::stoi(value);
      else if (key == "query_max") cfg.segmentation.query_max = std::stoi(value);
      else if (key == "d_model") mcfg.d_model = std::stoi(value);
      else if (key == "n_heads") mcfg.n_heads = std::stoi(value);
      else if (key == "n_layers") mcfg.n_layers = std::stoi(value);
      else if (key == "ffn_mult") mcfg.ffn_mult = std::stoi(value);
      else if (key == "max_positions") mcfg.max_positions = std::stoi(value);
      else if (key == "ltr_full_segment") mcfg.ltr_full_segment = value == "true" || value == "1";
      else if (key == "untied_ltr_head") mcfg.untied_ltr_head = value == "true" || value == "1";
      else throw ParseError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw ParseError("config line " + std::to_string(line_no) + ": bad value for '" + key + "'");
    }
  }
}

int run_synth(uint64_t seed, int docs, const std::string& out, const SynthConfig& scfg) {
  const Corpus corpus = generate_synthetic(seed, docs, scfg);
  if (out.empty()) {
    std::cout << corpus_to_jsonl(corpus);
  } else {
    save_corpus(out, corpus);
    std::cerr << "wrote " << corpus.docs.size() << " documents to " << out << "\n";
  }
  return 0;
}

int run_segment(const std::string& in, const std::string& out, const SegmentationConfig& scfg) {
  const Corpus corpus = load_corpus(in);
  std::string buf;
  for (const auto& doc : corpus.docs) {
    for (const auto& seg : segment_document(doc, scfg)) {
      json rec;
      rec["doc_id"] = doc.doc_id;
      rec["index"] = seg.index;
      rec["start"] = seg.source_start;
      rec["end"] = seg.source_end;
      rec["framed_len"] = seg.framed_tokens.size();
      buf += rec.dump();
      buf += '\n';
    }
  }
  emit(out, buf);
  return 0;
}

int run_label(const std::string& in, const std::string& out, double threshold,
              const SegmentationConfig& scfg) {
  const Corpus corpus = load_corpus(in);
  std::string buf;
  int unlabeled = 0;
  for (const auto& doc : corpus.docs) {
    const auto segs = segment_document(doc, scfg);
    const RelevanceLabelSet labels = label_document(doc, segs, threshold);
    if (labels.all_zero()) ++unlabeled;
    json rec;
    rec["doc_id"] = doc.doc_id;
    rec["scores"] = labels.scores;
    rec["labels"] = labels.labels;
    rec["threshold"] = labels.threshold_used;
    buf += rec.dump();
    buf += '\n';
  }
  emit(out, buf);
  if (unlabeled > 0)
    std::cerr << "warning: " << unlabeled << " document(s) received all-zero labels\n";
  return 0;
}

struct TrainArgs {
  std::string in, out, metrics, config, resume;
  TrainConfig cfg;
  ModelConfig mcfg;
  bool gen_only = false;
};

int run_train(const TrainArgs& args) {
  Corpus corpus = load_corpus(args.in);
  TrainConfig cfg = args.cfg;
  if (args.gen_only) cfg.lambda = 0.0;
  cfg.checkpoint_out = args.out;
  ModelConfig mcfg = args.mcfg;
  mcfg.seed = cfg.seed;  // one --seed drives init and shuffling alike

  std::unique_ptr<Trainer> trainer;
  if (!args.resume.empty()) {
    LoadedCheckpoint ckpt = load_checkpoint(args.resume);
    trainer = std::make_unique<Trainer>(std::move(corpus), std::move(ckpt), cfg);
  } else {
    trainer = std::make_unique<Trainer>(std::move(corpus), mcfg, cfg);
  }

  const TrainReport report = trainer->run();
  if (!args.out.empty())
    save_checkpoint(args.out, trainer->model(), trainer->vocab(), trainer->state());
  if (!args.metrics.empty()) {
    std::ofstream mf(args.metrics, std::ios::binary);
    if (!mf) throw RuntimeFailure("cannot write metrics file: " + args.metrics);
    mf << report.metrics_jsonl();
  } else {
    std::cout << report.metrics_jsonl();
  }
  std::cerr << "trained " << report.train_docs << " docs (" << report.heldout_docs
            << " held out) in " << report.epochs.size() << " epoch(s), "
            << report.wall_time_s << " s\n";
  return 0;
}

int run_rank(const std::string& ckpt_path, const std::string& in, const std::string& out,
             const std::string& by, const SegmentationConfig& scfg, int decode_max_len) {
  LoadedCheckpoint ckpt = load_checkpoint(ckpt_path);
  const auto docs = load_corpus_with_vocab(in, ckpt.vocab);
  std::string buf;
  for (const auto& doc : docs) {
    const auto segs = segment_document(doc, scfg);
    RankedList ranked;
    if (by == "ltr") {
      ranked = rank_by_ltr(*ckpt.model, segs);
    } else {
      const auto decoded = ckpt.model->greedy_decode(segs, decode_max_len);
      std::vector<TokenId> prefix{Vocab::kBos};
      prefix.insert(prefix.end(), decoded.begin(), decoded.end());
      const ForwardTrace trace = ckpt.model->forward_trace(segs, prefix);
      ranked = rank_by_attention(trace, segs);
    }
    json rec;
    rec["doc_id"] = doc.doc_id;
    rec["order"] = ranked.order;
    rec["scores"] = ranked.scores;
    rec["by"] = by;
    buf += rec.dump();
    buf += '\n';
  }
  emit(out, buf);
  return 0;
}

int run_eval(const std::string& ckpt_path, const std::string& in, const std::string& out, int k,
             double threshold, const SegmentationConfig& scfg, int decode_max_len) {
  LoadedCheckpoint ckpt = load_checkpoint(ckpt_path);
  const auto docs = load_corpus_with_vocab(in, ckpt.vocab);
  TrainConfig cfg;
  cfg.ndcg_k = k;
  cfg.threshold = threshold;
  cfg.segmentation = scfg;
  cfg.decode_max_len = decode_max_len;
  const EvalReport report = evaluate_model(*ckpt.model, docs, cfg);
  emit(out, report.to_json() + "\n");
  return 0;
}

}  // namespace

int cli_run(int argc, const char* const* argv) {
  CLI::App app{"LTR-assisted query-focused summarization pipeline"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus with planted gold segments");
  uint64_t synth_seed = 1;
  int synth_docs = 8;
  std::string synth_out;
  SynthConfig scfg;
  synth->add_option("--seed", synth_seed, "RNG seed");
  synth->add_option("--docs", synth_docs, "number of documents")->check(CLI::NonNegativeNumber);
  synth->add_option("--out", synth_out, "output JSONL path (stdout when omitted)");
  synth->add_option("--doc-len", scfg.doc_len, "source tokens per document");
  synth->add_option("--gold-regions", scfg.gold_regions, "planted gold regions per document");
  synth->add_option("--distractors", scfg.distractor_spans, "low-probability spans per document");

  // shared segmentation flags
  SegmentationConfig seg_cfg;
  auto add_seg_flags = [&seg_cfg](CLI::App* cmd) {
    cmd->add_option("--window", seg_cfg.window_len, "window length in tokens");
    cmd->add_option("--stride", seg_cfg.stride, "stride between window starts");
    cmd->add_option("--max-segments", seg_cfg.max_segments, "segment cap per document");
    cmd->add_option("--query-max", seg_cfg.query_max, "query tokens kept in the frame");
  };

  auto* segment = app.add_subcommand("segment", "Emit query-framed segment records");
  std::string seg_in, seg_out;
  segment->add_option("--in", seg_in, "corpus JSONL")->required();
  segment->add_option("--out", seg_out, "output path (stdout when omitted)");
  add_seg_flags(segment);

  auto* label = app.add_subcommand("label", "Score segments and assign graded relevance labels");
  std::string label_in, label_out;
  double label_threshold = 0.4;
  label->add_option("--in", label_in, "corpus JSONL")->required();
  label->add_option("--out", label_out, "output path (stdout when omitted)");
  label->add_option("--threshold", label_threshold, "span probability cutoff");
  add_seg_flags(label);

  auto* train_cmd = app.add_subcommand("train", "Jointly train generation and segment ranking");
  TrainArgs targs;
  std::string train_config;
  train_cmd->add_option("--in", targs.in, "corpus JSONL")->required();
  train_cmd->add_option("--out", targs.out, "checkpoint output path");
  train_cmd->add_option("--metrics", targs.metrics, "metrics JSONL path (stdout when omitted)");
  train_cmd->add_option("--config", train_config, "key = value config file");
  train_cmd->add_option("--resume", targs.resume, "checkpoint to resume from");
  auto* lambda_opt = train_cmd->add_option("--lambda", targs.cfg.lambda, "LTR loss weight");
  auto* thresh_opt = train_cmd->add_option("--threshold", targs.cfg.threshold, "labeling cutoff");
  auto* epochs_opt = train_cmd->add_option("--epochs", targs.cfg.epochs, "training epochs");
  auto* seed_opt = train_cmd->add_option("--seed", targs.cfg.seed, "RNG seed");
  auto* lr_opt = train_cmd->add_option("--lr", targs.cfg.learning_rate, "learning rate");
  auto* batch_opt = train_cmd->add_option("--batch", targs.cfg.batch_size, "documents per update");
  auto* optim_opt = train_cmd->add_option("--optimizer", targs.cfg.optimizer, "adam or sgd");
  auto* clip_opt = train_cmd->add_option("--clip", targs.cfg.clip_norm, "gradient clip norm");
  auto* evev_opt = train_cmd->add_option("--eval-every", targs.cfg.eval_every, "eval cadence");
  auto* k_opt = train_cmd->add_option("--ndcg-k", targs.cfg.ndcg_k, "nDCG cutoff");
  auto* frac_opt = train_cmd->add_option("--eval-fraction", targs.cfg.eval_fraction,
                                         "held-out share by doc hash");
  auto* workers_opt = train_cmd->add_option("--workers", targs.cfg.workers, "gradient shards");
  train_cmd->add_flag("--gen-only", targs.gen_only, "generation-only training (lambda = 0)");
  auto* dmodel_opt = train_cmd->add_option("--d-model", targs.mcfg.d_model, "embedding width");
  auto* heads_opt = train_cmd->add_option("--heads", targs.mcfg.n_heads, "attention heads");
  auto* layers_opt = train_cmd->add_option("--layers", targs.mcfg.n_layers, "transformer layers");
  SegmentationConfig train_seg;  // separate so --config can also set it
  auto* win_opt = train_cmd->add_option("--window", train_seg.window_len, "window length");
  auto* stride_opt = train_cmd->add_option("--stride", train_seg.stride, "window stride");

  auto* rank = app.add_subcommand("rank", "Rank segments with a trained checkpoint");
  std::string rank_ckpt, rank_in, rank_out, rank_by = "ltr";
  int rank_decode_len = 32;
  rank->add_option("--checkpoint", rank_ckpt, "checkpoint path")->required();
  rank->add_option("--in", rank_in, "corpus JSONL")->required();
  rank->add_option("--out", rank_out, "output path (stdout when omitted)");
  rank->add_option("--by", rank_by, "ranking source")->check(CLI::IsMember({"ltr", "attention"}));
  rank->add_option("--decode-max-len", rank_decode_len, "greedy decode cap for attention ranking");
  add_seg_flags(rank);

  auto* eval_cmd = app.add_subcommand("eval", "nDCG and ROUGE report for a checkpoint");
  std::string eval_ckpt, eval_in, eval_out;
  int eval_k = 5, eval_decode_len = 32;
  double eval_threshold = 0.4;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint path")->required();
  eval_cmd->add_option("--in", eval_in, "corpus JSONL")->required();
  eval_cmd->add_option("--out", eval_out, "output path (stdout when omitted)");
  eval_cmd->add_option("--k", eval_k, "nDCG cutoff");
  eval_cmd->add_option("--threshold", eval_threshold, "labeling cutoff");
  eval_cmd->add_option("--decode-max-len", eval_decode_len, "greedy decode cap");
  add_seg_flags(eval_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) return run_synth(synth_seed, synth_docs, synth_out, scfg);
    if (segment->parsed()) return run_segment(seg_in, seg_out, seg_cfg);
    if (label->parsed()) return run_label(label_in, label_out, label_threshold, seg_cfg);
    if (train_cmd->parsed()) {
      if (!train_config.empty()) {
        // the file supplies base values; explicitly passed flags win
        const TrainConfig from_flags = targs.cfg;
        const ModelConfig mcfg_from_flags = targs.mcfg;
        targs.cfg = TrainConfig{};
        targs.mcfg = ModelConfig{};
        apply_config_file(train_config, targs.cfg, targs.mcfg);
        if (lambda_opt->count()) targs.cfg.lambda = from_flags.lambda;
        if (thresh_opt->count()) targs.cfg.threshold = from_flags.threshold;
        if (epochs_opt->count()) targs.cfg.epochs = from_flags.epochs;
        if (seed_opt->count()) targs.cfg.seed = from_flags.seed;
        if (lr_opt->count()) targs.cfg.learning_rate = from_flags.learning_rate;
        if (batch_opt->count()) targs.cfg.batch_size = from_flags.batch_size;
        if (optim_opt->count()) targs.cfg.optimizer = from_flags.optimizer;
        if (clip_opt->count()) targs.cfg.clip_norm = from_flags.clip_norm;
        if (evev_opt->count()) targs.cfg.eval_every = from_flags.eval_every;
        if (k_opt->count()) targs.cfg.ndcg_k = from_flags.ndcg_k;
        if (frac_opt->count()) targs.cfg.eval_fraction = from_flags.eval_fraction;
        if (workers_opt->count()) targs.cfg.workers = from_flags.workers;
        if (dmodel_opt->count()) targs.mcfg.d_model = mcfg_from_flags.d_model;
        if (heads_opt->count()) targs.mcfg.n_heads = mcfg_from_flags.n_heads;
        if (layers_opt->count()) targs.mcfg.n_layers = mcfg_from_flags.n_layers;
      }
      if (win_opt->count()) targs.cfg.segmentation.window_len = train_seg.window_len;
      if (stride_opt->count()) targs.cfg.segmentation.stride = train_seg.stride;
      return run_train(targs);
    }
    if (rank->parsed())
      return run_rank(rank_ckpt, rank_in, rank_out, rank_by, seg_cfg, rank_decode_len);
    if (eval_cmd->parsed())
      return run_eval(eval_ckpt, eval_in, eval_out, eval_k, eval_threshold, seg_cfg,
                      eval_decode_len);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace ltrsum
