#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "wenet/corpus.hpp"
#include "wenet/model.hpp"
#include "wenet/tensor.hpp"

namespace wenet {

struct TrainConfig {
  std::size_t embedding_dim = 64;
  std::size_t encoder_hidden = 64;  // per direction
  std::size_t decoder_hidden = 128;
  std::size_t vocab_cap = 5000;
  std::size_t iterations = 2;  // editing passes per example
  double learning_rate = 1e-3;
  double clip_norm = 5.0;
  std::size_t batch_size = 1;
  std::size_t epochs = 30;
  std::size_t patience = 5;
  std::uint64_t seed = 13;
  std::size_t max_len = 200;

  void validate() const;  // ArgumentError on any violated invariant
  ModelDims dims(std::size_t vocab) const;

  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
};

// Adam moments, aligned with ModelParams::visit order.
struct OptimizerState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step = 0;

  static OptimizerState for_params(const ModelParams& params);
};

// Global-norm clipping followed by an Adam update (0.9/0.999, 1e-8, bias
// correction). Gradients follow ModelParams::visit order. NaN or Inf in any
// gradient raises NumericError before anything is touched.
void optimizer_step(ModelParams& params, std::span<const Tensor> gradients, OptimizerState& state,
                    double learning_rate, double clip_norm);

// Applies global L2 clipping in place; exposed for tests.
void clip_gradients(std::span<Tensor> gradients, double clip_norm);

struct Checkpoint {
  std::uint32_t version = 1;
  TrainConfig config;
  Vocabulary vocab = Vocabulary::from_text("<pad>\n<s>\n</s>\n<unk>\nplaceholder\n");
  ModelParams params;
  OptimizerState optimizer;
  std::size_t epoch = 0;
};

void checkpoint_save(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint checkpoint_load(const std::filesystem::path& path);

struct EpochLoss {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochLoss> log;
};

using EpochCallback = std::function<void(const EpochLoss&)>;

// Per-epoch seeded shuffle, teacher-forced multi-draft loss per document,
// clipped Adam updates. Tracks the best validation loss (train loss when the
// validation split is empty) and stops early after `patience` stale epochs.
// on_epoch, when set, fires after each epoch's losses are known.
TrainResult train(const CorpusSplit& corpus, const Vocabulary& vocab, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

// Mean over draft logit blocks of the cross entropy against gold, PAD ignored.
Tensor multi_draft_loss(Tape& tape, std::span<const Tensor> draft_logits, std::span<const int> gold_ids);

}  // namespace wenet
