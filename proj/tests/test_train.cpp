#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "wenet/corpus.hpp"
#include "wenet/error.hpp"
#include "wenet/model.hpp"
#include "wenet/rng.hpp"
#include "wenet/token_ids.hpp"
#include "wenet/train.hpp"

using namespace wenet;

namespace {

namespace fs = std::filesystem;

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = zeros(std::move(shape));
  for (double& v : t.values) v = rng.uniform(lo, hi);
  return t;
}

// Ten short title/abstract pairs over a small vocabulary.
CorpusSplit micro_corpus() {
  const std::vector<std::pair<std::string, std::string>> pairs = {
      {"relation extraction methods", "we study relation extraction with web based features"},
      {"neural parsing models", "a neural model for dependency parsing of long sentences"},
      {"machine translation quality", "improving machine translation quality with attention"},
      {"word sense disambiguation", "word sense disambiguation using support vector machines"},
      {"semantic role labeling", "semantic role labeling with recurrent neural networks"},
      {"text summarization systems", "abstractive text summarization with copy mechanisms"},
      {"question answering corpora", "building corpora for open domain question answering"},
      {"sentiment analysis tweets", "sentiment analysis of tweets with limited supervision"},
      {"coreference resolution chains", "clustering mention chains for coreference resolution"},
      {"topic models documents", "scalable topic models for large document collections"},
  };
  CorpusSplit split;
  for (const auto& [title, abstract] : pairs) {
    split.train.push_back(Document{tokenize(title), tokenize(abstract)});
  }
  return split;
}

TrainConfig micro_config() {
  TrainConfig cfg;
  cfg.embedding_dim = 16;
  cfg.encoder_hidden = 16;
  cfg.decoder_hidden = 32;
  cfg.vocab_cap = 500;
  cfg.iterations = 1;
  cfg.epochs = 20;
  cfg.patience = 50;
  cfg.seed = 7;
  cfg.max_len = 16;
  return cfg;
}

}  // namespace

TEST_CASE("multi-draft loss averages per-draft cross entropies") {
  Rng rng(1);
  const std::vector<int> gold = {1, 2, 3};  // targets become gold + EOS
  const Tensor block_a = random_tensor({4, 6}, rng);
  const Tensor block_b = random_tensor({4, 6}, rng);

  Tape t1;
  const double single = multi_draft_loss(t1, std::vector<Tensor>{block_a}, gold).values[0];
  Tape t2;
  const double ce = t2.cross_entropy(block_a, decoder_targets(gold), kPadId).values[0];
  CHECK(single == ce);

  Tape t3;
  const double twin = multi_draft_loss(t3, std::vector<Tensor>{block_a, block_a}, gold).values[0];
  CHECK(std::abs(twin - single) <= 1e-12);

  Tape t4;
  const double both = multi_draft_loss(t4, std::vector<Tensor>{block_a, block_b}, gold).values[0];
  Tape t5;
  const double b = t5.cross_entropy(block_b, decoder_targets(gold), kPadId).values[0];
  CHECK(std::abs(both - (ce + b) / 2.0) <= 1e-12);

  Tape t6;
  CHECK_THROWS_AS(multi_draft_loss(t6, std::vector<Tensor>{}, gold), ArgumentError);
}

TEST_CASE("optimizer leaves parameters alone on zero gradients") {
  ModelDims dims;
  dims.vocab = 6;
  dims.embedding = 3;
  dims.enc_hidden = 2;
  ModelParams params = ModelParams::init(dims, 5);
  const ModelParams before = params;
  OptimizerState state = OptimizerState::for_params(params);

  std::vector<Tensor> grads;
  params.visit([&grads](const std::string&, Tensor& t) { grads.push_back(zeros(t.shape)); });
  optimizer_step(params, grads, state, 1e-3, 5.0);

  CHECK(state.step == 1);
  bool identical = true;
  std::size_t slot = 0;
  std::vector<const Tensor*> before_tensors;
  before.visit([&before_tensors](const std::string&, const Tensor& t) { before_tensors.push_back(&t); });
  params.visit([&](const std::string&, Tensor& t) {
    if (std::memcmp(t.values.data(), before_tensors[slot]->values.data(),
                    t.values.size() * sizeof(double)) != 0) {
      identical = false;
    }
    ++slot;
  });
  CHECK(identical);
}

TEST_CASE("first adam step on a unit gradient moves by about the learning rate") {
  // One scalar parameter; bias correction makes the first update lr to
  // within the stabilizer term.
  ModelDims dims;
  dims.vocab = 5;
  dims.embedding = 1;
  dims.enc_hidden = 1;
  ModelParams params = ModelParams::init(dims, 5);
  OptimizerState state = OptimizerState::for_params(params);

  std::vector<Tensor> grads;
  std::vector<std::string> names;
  params.visit([&](const std::string& name, Tensor& t) {
    grads.push_back(zeros(t.shape));
    names.push_back(name);
  });
  grads[0].values[0] = 1.0;  // embedding[0][0]
  const double before = params.embedding.values[0];
  optimizer_step(params, grads, state, 1e-3, 5.0);
  const double update = params.embedding.values[0] - before;

  const double expect = -1e-3 * 1.0 / (1.0 + 1e-8);  // m-hat = 1, v-hat = 1
  CHECK(std::abs(update - expect) <= 1e-15);
  CHECK(std::abs(update + 1e-3) <= 1e-9);
}

TEST_CASE("global clipping rescales exactly and never grows the norm") {
  Tensor g = zeros({2, 2});
  g.values = {6.0, 8.0, 0.0, 0.0};  // norm 10
  std::vector<Tensor> grads = {g};
  clip_gradients(grads, 5.0);
  CHECK(grads[0].values[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(grads[0].values[1] == doctest::Approx(4.0).epsilon(1e-12));

  // Norm 100 clipped to 5 scales by 0.05.
  Tensor big = zeros({1, 1});
  big.values = {100.0};
  std::vector<Tensor> one = {big};
  clip_gradients(one, 5.0);
  CHECK(one[0].values[0] == doctest::Approx(5.0).epsilon(1e-12));

  Rng rng(9);
  for (int round = 0; round < 20; ++round) {
    std::vector<Tensor> gs = {random_tensor({3, 3}, rng, -4.0, 4.0), random_tensor({2}, rng, -4.0, 4.0)};
    double before = 0.0;
    for (const Tensor& t : gs) {
      for (double v : t.values) before += v * v;
    }
    clip_gradients(gs, 2.5);
    double after = 0.0;
    for (const Tensor& t : gs) {
      for (double v : t.values) after += v * v;
    }
    CHECK(std::sqrt(after) <= std::min(std::sqrt(before), 2.5) + 1e-9);
  }
}

TEST_CASE("non-finite gradients abort the step") {
  ModelDims dims;
  dims.vocab = 5;
  dims.embedding = 1;
  dims.enc_hidden = 1;
  ModelParams params = ModelParams::init(dims, 5);
  OptimizerState state = OptimizerState::for_params(params);
  std::vector<Tensor> grads;
  params.visit([&grads](const std::string&, Tensor& t) { grads.push_back(zeros(t.shape)); });
  grads[0].values[0] = std::nan("");
  CHECK_THROWS_AS(optimizer_step(params, grads, state, 1e-3, 5.0), NumericError);
  CHECK(state.step == 0);
}

TEST_CASE("a zero learning rate leaves parameters untouched across an epoch") {
  CorpusSplit split = micro_corpus();
  const Vocabulary vocab = Vocabulary::build(split.train, 1);
  TrainConfig cfg = micro_config();
  cfg.learning_rate = 0.0;
  cfg.epochs = 1;

  const TrainResult result = train(split, vocab, cfg);
  const ModelParams fresh = ModelParams::init(cfg.dims(vocab.size()), cfg.seed);
  std::vector<const Tensor*> fresh_tensors;
  fresh.visit([&fresh_tensors](const std::string&, const Tensor& t) { fresh_tensors.push_back(&t); });
  std::size_t slot = 0;
  bool identical = true;
  result.best.params.visit([&](const std::string&, const Tensor& t) {
    if (t.values != fresh_tensors[slot]->values) identical = false;
    ++slot;
  });
  CHECK(identical);
}

TEST_CASE("training drives micro-corpus loss under the uniform baseline") {
  CorpusSplit split = micro_corpus();
  const Vocabulary vocab = Vocabulary::build(split.train, 1);
  const TrainConfig cfg = micro_config();  // 20 epochs x 10 docs = 200 steps

  const TrainResult result = train(split, vocab, cfg);
  REQUIRE(!result.log.empty());
  const double baseline = std::log(static_cast<double>(vocab.size()));
  CHECK(result.log.back().train_loss < baseline);

  // Mostly monotone: allow 5% transient increases.
  for (std::size_t i = 1; i < result.log.size(); ++i) {
    CHECK(result.log[i].train_loss <= result.log[i - 1].train_loss * 1.05);
  }
}

TEST_CASE("training is bit-deterministic for a fixed seed") {
  CorpusSplit split = micro_corpus();
  const Vocabulary vocab = Vocabulary::build(split.train, 1);
  TrainConfig cfg = micro_config();
  cfg.epochs = 3;

  const TrainResult a = train(split, vocab, cfg);
  const TrainResult b = train(split, vocab, cfg);
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(std::memcmp(&a.log[i].train_loss, &b.log[i].train_loss, sizeof(double)) == 0);
    CHECK(std::memcmp(&a.log[i].validation_loss, &b.log[i].validation_loss, sizeof(double)) == 0);
  }
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  CorpusSplit split = micro_corpus();
  const Vocabulary vocab = Vocabulary::build(split.train, 1);
  TrainConfig cfg = micro_config();
  cfg.epochs = 2;
  const TrainResult result = train(split, vocab, cfg);

  const fs::path path = fs::temp_directory_path() / "wenet_ckpt_test.bin";
  checkpoint_save(result.best, path);
  const Checkpoint loaded = checkpoint_load(path);

  CHECK(loaded.epoch == result.best.epoch);
  CHECK(loaded.optimizer.step == result.best.optimizer.step);
  CHECK(loaded.vocab.size() == vocab.size());
  CHECK(loaded.config.to_json() == cfg.to_json());

  std::vector<const Tensor*> saved;
  result.best.params.visit([&saved](const std::string&, const Tensor& t) { saved.push_back(&t); });
  std::size_t slot = 0;
  loaded.params.visit([&](const std::string&, const Tensor& t) {
    REQUIRE(t.shape == saved[slot]->shape);
    CHECK(std::memcmp(t.values.data(), saved[slot]->values.data(), t.values.size() * sizeof(double)) == 0);
    ++slot;
  });
  for (std::size_t i = 0; i < loaded.optimizer.first_moment.size(); ++i) {
    CHECK(loaded.optimizer.first_moment[i].values == result.best.optimizer.first_moment[i].values);
    CHECK(loaded.optimizer.second_moment[i].values == result.best.optimizer.second_moment[i].values);
  }

  // Generation after reload matches generation before save token-for-token.
  const std::vector<int> title_ids = vocab.encode(split.train[0].title);
  const std::vector<Draft> before = generate(title_ids, result.best.params, 2, cfg.max_len);
  const std::vector<Draft> after = generate(title_ids, loaded.params, 2, cfg.max_len);
  REQUIRE(before.size() == after.size());
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(before[i].tokens == after[i].tokens);

  fs::remove(path);
}

TEST_CASE("checkpoint loader distinguishes its failure modes") {
  CorpusSplit split = micro_corpus();
  const Vocabulary vocab = Vocabulary::build(split.train, 1);
  TrainConfig cfg = micro_config();
  cfg.epochs = 1;
  const TrainResult result = train(split, vocab, cfg);
  const fs::path path = fs::temp_directory_path() / "wenet_ckpt_modes.bin";
  checkpoint_save(result.best, path);

  auto read_all = [&path] {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  };
  const std::string bytes = read_all();

  // Truncation at several prefixes.
  for (const std::size_t keep : {std::size_t{3}, std::size_t{20}, bytes.size() - 7}) {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(keep));
    out.close();
    try {
      checkpoint_load(path);
      FAIL("expected CheckpointError");
    } catch (const CheckpointError& e) {
      CHECK(e.kind() == CheckpointError::Kind::Truncated);
    }
  }

  // Wrong magic.
  {
    std::string bad = bytes;
    bad[0] = 'X';
    std::ofstream out(path, std::ios::binary);
    out.write(bad.data(), static_cast<std::streamsize>(bad.size()));
    out.close();
    try {
      checkpoint_load(path);
      FAIL("expected CheckpointError");
    } catch (const CheckpointError& e) {
      CHECK(e.kind() == CheckpointError::Kind::BadMagic);
    }
  }

  // Unsupported version.
  {
    std::string bad = bytes;
    bad[6] = 9;
    std::ofstream out(path, std::ios::binary);
    out.write(bad.data(), static_cast<std::streamsize>(bad.size()));
    out.close();
    try {
      checkpoint_load(path);
      FAIL("expected CheckpointError");
    } catch (const CheckpointError& e) {
      CHECK(e.kind() == CheckpointError::Kind::BadVersion);
    }
  }

  fs::remove(path);
}

TEST_CASE("train rejects bad inputs up front") {
  const Vocabulary vocab = Vocabulary::build(micro_corpus().train, 1);
  TrainConfig cfg = micro_config();

  CorpusSplit empty;
  CHECK_THROWS_AS(train(empty, vocab, cfg), ArgumentError);

  TrainConfig bad = cfg;
  bad.decoder_hidden = cfg.encoder_hidden;  // violates the 2x rule
  CHECK_THROWS_AS(train(micro_corpus(), vocab, bad), ArgumentError);

  TrainConfig tiny_cap = cfg;
  tiny_cap.vocab_cap = 5;
  CHECK_THROWS_AS(train(micro_corpus(), vocab, tiny_cap), ArgumentError);
}
