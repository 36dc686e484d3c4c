// SPDX-License-Identifier: Apache-2.0
#include "ltrsum/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "ltrsum/errors.hpp"

using nlohmann::json;

namespace ltrsum {

namespace {

constexpr char kMagic[8] = {'L', 'T', 'R', 'S', 'U', 'M', 'V', '1'};

void write_u64(std::ostream& out, uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, 8);
}

uint64_t read_u64(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
  return v;
}

void write_mat(std::ostream& out, const Mat& m) {
  for (double d : m.data) {
    const uint64_t bits = std::bit_cast<uint64_t>(d);
    write_u64(out, bits);
  }
}

void read_mat(std::istream& in, Mat& m) {
  for (double& d : m.data) {
    d = std::bit_cast<double>(read_u64(in));
  }
}

json config_to_json(const ModelConfig& cfg) {
  return json{{"d_model", cfg.d_model},
              {"n_heads", cfg.n_heads},
              {"n_layers", cfg.n_layers},
              {"ffn_mult", cfg.ffn_mult},
              {"vocab_size", cfg.vocab_size},
              {"max_positions", cfg.max_positions},
              {"seed", cfg.seed},
              {"ltr_full_segment", cfg.ltr_full_segment},
              {"untied_ltr_head", cfg.untied_ltr_head}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig cfg;
  cfg.d_model = j.at("d_model").get<int>();
  cfg.n_heads = j.at("n_heads").get<int>();
  cfg.n_layers = j.at("n_layers").get<int>();
  cfg.ffn_mult = j.at("ffn_mult").get<int>();
  cfg.vocab_size = j.at("vocab_size").get<int>();
  cfg.max_positions = j.at("max_positions").get<int>();
  cfg.seed = j.at("seed").get<uint64_t>();
  cfg.ltr_full_segment = j.at("ltr_full_segment").get<bool>();
  cfg.untied_ltr_head = j.at("untied_ltr_head").get<bool>();
  return cfg;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model, const Vocab& vocab,
                     const TrainerState& state) {
  if (vocab.size() != model.config().vocab_size)
    throw ValidationError("checkpoint: vocab size does not match model config");

  json header;
  header["model"] = config_to_json(model.config());
  // reserved spellings are implicit; store only the learned tail
  json words = json::array();
  for (int i = Vocab::kNumReserved; i < vocab.size(); ++i) words.push_back(vocab.token_of(i));
  header["vocab"] = std::move(words);

  json tensors = json::array();
  for (const ad::Param* p : model.parameters())
    tensors.push_back({{"name", p->name}, {"rows", p->value.rows}, {"cols", p->value.cols}});
  header["tensors"] = std::move(tensors);

  header["trainer"] = {{"optimizer", state.optimizer},
                       {"step", state.step},
                       {"epochs_completed", state.epochs_completed},
                       {"has_moments", state.has_moments()}};
  if (state.has_moments() && state.adam_m.size() != model.parameters().size())
    throw ValidationError("checkpoint: optimizer moments misaligned with parameters");

  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  const std::string header_str = header.dump();
  write_u64(out, header_str.size());
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const ad::Param* p : model.parameters()) write_mat(out, p->value);
  if (state.has_moments()) {
    for (const Mat& m : state.adam_m) write_mat(out, m);
    for (const Mat& m : state.adam_v) write_mat(out, m);
  }
  if (!out) throw RuntimeFailure("short write while saving checkpoint: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeFailure("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw ParseError("not a checkpoint file (bad magic): " + path);
  const uint64_t header_len = read_u64(in);
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw ParseError("truncated checkpoint header: " + path);

  json header;
  try {
    header = json::parse(header_str);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("corrupt checkpoint header: ") + e.what());
  }

  LoadedCheckpoint ckpt;
  ckpt.config = config_from_json(header.at("model"));
  std::vector<std::string> words;
  for (const auto& w : header.at("vocab")) words.push_back(w.get<std::string>());
  ckpt.vocab = Vocab(words);
  if (ckpt.vocab.size() != ckpt.config.vocab_size)
    throw ParseError("checkpoint vocab does not match model config vocab_size");

  ckpt.model = std::make_unique<Model>(ckpt.config);
  const auto& params = ckpt.model->parameters();
  const auto& tensors = header.at("tensors");
  if (tensors.size() != params.size())
    throw ParseError("checkpoint tensor manifest does not match model layout");
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& t = tensors[i];
    if (t.at("name").get<std::string>() != params[i]->name ||
        t.at("rows").get<int>() != params[i]->value.rows ||
        t.at("cols").get<int>() != params[i]->value.cols)
      throw ParseError("checkpoint tensor mismatch at '" + params[i]->name + "'");
  }
  for (size_t i = 0; i < params.size(); ++i) read_mat(in, params[i]->value);

  const auto& tr = header.at("trainer");
  ckpt.state.optimizer = tr.at("optimizer").get<std::string>();
  ckpt.state.step = tr.at("step").get<int64_t>();
  ckpt.state.epochs_completed = tr.at("epochs_completed").get<int>();
  if (tr.at("has_moments").get<bool>()) {
    ckpt.state.adam_m.reserve(params.size());
    ckpt.state.adam_v.reserve(params.size());
    for (const ad::Param* p : params) ckpt.state.adam_m.emplace_back(p->value.rows, p->value.cols);
    for (const ad::Param* p : params) ckpt.state.adam_v.emplace_back(p->value.rows, p->value.cols);
    for (Mat& m : ckpt.state.adam_m) read_mat(in, m);
    for (Mat& m : ckpt.state.adam_v) read_mat(in, m);
  }
  if (!in) throw ParseError("truncated checkpoint payload: " + path);
  return ckpt;
}

}  // namespace ltrsum
