// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ltrsum/corpus.hpp"
#include "ltrsum/nnmodel.hpp"

namespace ltrsum {

// Optimizer and progress state carried across save/load so that resumed
// training continues the exact trajectory.
struct TrainerState {
  std::string optimizer = "none";  // "none" | "sgd" | "adam"
  int64_t step = 0;
  int epochs_completed = 0;
  std::vector<Mat> adam_m;  // aligned with Model::parameters() order
  std::vector<Mat> adam_v;

  bool has_moments() const { return !adam_m.empty(); }
};

struct LoadedCheckpoint {
  ModelConfig config;
  Vocab vocab;
  std::unique_ptr<Model> model;
  TrainerState state;
};

// Binary container: magic "LTRSUMV1", little-endian u64 header length,
// JSON header (config, vocab, tensor manifest, trainer state), then raw
// little-endian float64 payloads in manifest order. Layout details in
// the README. Round-trips are lossless and byte-stable.
void save_checkpoint(const std::string& path, const Model& model, const Vocab& vocab,
                     const TrainerState& state = {});

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace ltrsum
