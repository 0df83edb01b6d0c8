#include "wenet/train.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "wenet/error.hpp"
#include "wenet/rng.hpp"
#include "wenet/token_ids.hpp"

namespace wenet {

static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes a little-endian host");

void TrainConfig::validate() const {
  if (embedding_dim == 0 || encoder_hidden == 0 || decoder_hidden == 0 || vocab_cap == 0 ||
      clip_norm <= 0.0 || batch_size == 0 || epochs == 0 || max_len == 0) {
    throw ArgumentError("config: every dimension and budget must be positive");
  }
  if (learning_rate < 0.0 || !std::isfinite(learning_rate)) {
    throw ArgumentError("config: learning_rate must be non-negative");
  }
  if (decoder_hidden != 2 * encoder_hidden) {
    throw ArgumentError("config: decoder_hidden must equal 2 * encoder_hidden (got " +
                        std::to_string(decoder_hidden) + " vs 2*" + std::to_string(encoder_hidden) + ")");
  }
  if (vocab_cap < 5) throw ArgumentError("config: vocab_cap must be at least 5");
}

ModelDims TrainConfig::dims(std::size_t vocab) const {
  ModelDims d;
  d.vocab = vocab;
  d.embedding = embedding_dim;
  d.enc_hidden = encoder_hidden;
  return d;
}

std::string TrainConfig::to_json() const {
  nlohmann::ordered_json j;
  j["embedding_dim"] = embedding_dim;
  j["encoder_hidden"] = encoder_hidden;
  j["decoder_hidden"] = decoder_hidden;
  j["vocab_cap"] = vocab_cap;
  j["iterations"] = iterations;
  j["learning_rate"] = learning_rate;
  j["clip_norm"] = clip_norm;
  j["batch_size"] = batch_size;
  j["epochs"] = epochs;
  j["patience"] = patience;
  j["seed"] = seed;
  j["max_len"] = max_len;
  return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ParseError("config JSON is malformed");
  TrainConfig cfg;
  try {
    cfg.embedding_dim = j.at("embedding_dim").get<std::size_t>();
    cfg.encoder_hidden = j.at("encoder_hidden").get<std::size_t>();
    cfg.decoder_hidden = j.at("decoder_hidden").get<std::size_t>();
    cfg.vocab_cap = j.at("vocab_cap").get<std::size_t>();
    cfg.iterations = j.at("iterations").get<std::size_t>();
    cfg.learning_rate = j.at("learning_rate").get<double>();
    cfg.clip_norm = j.at("clip_norm").get<double>();
    cfg.batch_size = j.at("batch_size").get<std::size_t>();
    cfg.epochs = j.at("epochs").get<std::size_t>();
    cfg.patience = j.at("patience").get<std::size_t>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.max_len = j.at("max_len").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("config JSON is missing a field: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

OptimizerState OptimizerState::for_params(const ModelParams& params) {
  OptimizerState state;
  params.visit([&state](const std::string&, const Tensor& t) {
    state.first_moment.push_back(zeros(t.shape));
    state.second_moment.push_back(zeros(t.shape));
  });
  return state;
}

void clip_gradients(std::span<Tensor> gradients, double clip_norm) {
  double sq = 0.0;
  for (const Tensor& g : gradients) {
    for (double v : g.values) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (norm <= clip_norm || norm == 0.0) return;
  const double scale = clip_norm / norm;
  for (Tensor& g : gradients) {
    for (double& v : g.values) v *= scale;
  }
}

void optimizer_step(ModelParams& params, std::span<const Tensor> gradients, OptimizerState& state,
                    double learning_rate, double clip_norm) {
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;

  std::vector<Tensor*> tensors;
  params.visit([&tensors](const std::string&, Tensor& t) { tensors.push_back(&t); });
  if (gradients.size() != tensors.size()) {
    throw DimensionError("optimizer_step: " + std::to_string(gradients.size()) + " gradients for " +
                         std::to_string(tensors.size()) + " parameters");
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (gradients[i].shape != tensors[i]->shape) {
      throw DimensionError("optimizer_step: gradient shape " + shape_str(gradients[i].shape) +
                           " does not match parameter shape " + shape_str(tensors[i]->shape));
    }
    if (!gradients[i].all_finite()) {
      throw NumericError("optimizer_step: non-finite gradient; step aborted");
    }
  }

  std::vector<Tensor> clipped(gradients.begin(), gradients.end());
  clip_gradients(clipped, clip_norm);

  state.step += 1;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    Tensor& p = *tensors[i];
    Tensor& m = state.first_moment[i];
    Tensor& v = state.second_moment[i];
    for (std::size_t c = 0; c < p.numel(); ++c) {
      const double g = clipped[i].values[c];
      m.values[c] = kBeta1 * m.values[c] + (1.0 - kBeta1) * g;
      v.values[c] = kBeta2 * v.values[c] + (1.0 - kBeta2) * g * g;
      const double mhat = m.values[c] / bc1;
      const double vhat = v.values[c] / bc2;
      p.values[c] -= learning_rate * mhat / (std::sqrt(vhat) + kEps);
    }
  }
}

Tensor multi_draft_loss(Tape& tape, std::span<const Tensor> draft_logits, std::span<const int> gold_ids) {
  if (draft_logits.empty()) throw ArgumentError("multi_draft_loss: needs at least one draft logits block");
  const std::vector<int> targets = decoder_targets(gold_ids);
  std::vector<Tensor> losses;
  losses.reserve(draft_logits.size());
  for (const Tensor& block : draft_logits) {
    losses.push_back(tape.cross_entropy(block, targets, kPadId));
  }
  return losses.size() == 1 ? losses[0] : tape.mean(losses);
}

namespace {

// Binary checkpoint layout (little-endian):
//   magic "WENET1", u32 version,
//   u64 length + UTF-8 JSON header {config, epoch, opt_step},
//   u64 length + vocabulary text block,
//   u32 tensor count, then per tensor:
//     u64 name length + name, u32 rank, u64 dims..., raw doubles.
constexpr char kMagic[6] = {'W', 'E', 'N', 'E', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

void write_block(std::ostream& out, const std::string& data) {
  write_pod<std::uint64_t>(out, data.size());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
}

void write_tensor(std::ostream& out, const std::string& name, const Tensor& t) {
  write_block(out, name);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape) write_pod<std::uint64_t>(out, d);
  out.write(reinterpret_cast<const char*>(t.values.data()),
            static_cast<std::streamsize>(t.values.size() * sizeof(double)));
}

template <typename T>
T read_pod(std::istream& in) {
  T value;
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw CheckpointError(CheckpointError::Kind::Truncated, "checkpoint file is truncated");
  return value;
}

std::string read_block(std::istream& in) {
  const std::uint64_t len = read_pod<std::uint64_t>(in);
  std::string data(len, '\0');
  in.read(data.data(), static_cast<std::streamsize>(len));
  if (!in) throw CheckpointError(CheckpointError::Kind::Truncated, "checkpoint file is truncated");
  return data;
}

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

NamedTensor read_tensor(std::istream& in) {
  NamedTensor nt;
  nt.name = read_block(in);
  const std::uint32_t rank = read_pod<std::uint32_t>(in);
  if (rank == 0 || rank > 8) {
    throw CheckpointError(CheckpointError::Kind::Corrupt, "checkpoint tensor '" + nt.name + "' has rank " +
                                                              std::to_string(rank));
  }
  Shape shape(rank);
  std::size_t numel = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    shape[i] = static_cast<std::size_t>(read_pod<std::uint64_t>(in));
    if (shape[i] == 0) {
      throw CheckpointError(CheckpointError::Kind::Corrupt, "checkpoint tensor '" + nt.name + "' has a zero dim");
    }
    numel *= shape[i];
  }
  std::vector<double> values(numel);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(numel * sizeof(double)));
  if (!in) throw CheckpointError(CheckpointError::Kind::Truncated, "checkpoint file is truncated");
  nt.tensor = Tensor(std::move(shape), std::move(values));
  return nt;
}

}  // namespace

void checkpoint_save(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");

  out.write(kMagic, sizeof(kMagic));
  write_pod<std::uint32_t>(out, ckpt.version);

  nlohmann::ordered_json header;
  header["config"] = nlohmann::ordered_json::parse(ckpt.config.to_json());
  header["epoch"] = ckpt.epoch;
  header["opt_step"] = ckpt.optimizer.step;
  write_block(out, header.dump());
  write_block(out, ckpt.vocab.to_text());

  std::vector<NamedTensor> tensors;
  ckpt.params.visit([&tensors](const std::string& name, const Tensor& t) { tensors.push_back({name, t}); });
  const std::size_t param_count = tensors.size();
  for (std::size_t i = 0; i < param_count; ++i) {
    tensors.push_back({"adam.m/" + tensors[i].name, ckpt.optimizer.first_moment[i]});
    tensors.push_back({"adam.v/" + tensors[i].name, ckpt.optimizer.second_moment[i]});
  }

  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const NamedTensor& nt : tensors) write_tensor(out, nt.name, nt.tensor);
  if (!out) throw IoError("failed writing " + path.string());
}

Checkpoint checkpoint_load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());

  char magic[6];
  in.read(magic, sizeof(magic));
  if (!in) throw CheckpointError(CheckpointError::Kind::Truncated, "checkpoint file is truncated");
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError(CheckpointError::Kind::BadMagic, path.string() + " is not a checkpoint file");
  }
  const std::uint32_t version = read_pod<std::uint32_t>(in);
  if (version != kVersion) {
    throw CheckpointError(CheckpointError::Kind::BadVersion,
                          "unsupported checkpoint version " + std::to_string(version));
  }

  Checkpoint ckpt;
  ckpt.version = version;
  const std::string header_text = read_block(in);
  nlohmann::json header = nlohmann::json::parse(header_text, nullptr, false);
  if (header.is_discarded() || !header.is_object() || !header.contains("config")) {
    throw CheckpointError(CheckpointError::Kind::Corrupt, "checkpoint header is malformed");
  }
  try {
    ckpt.config = TrainConfig::from_json(header["config"].dump());
    ckpt.epoch = header.at("epoch").get<std::size_t>();
    ckpt.optimizer.step = header.at("opt_step").get<std::uint64_t>();
  } catch (const Error&) {
    throw CheckpointError(CheckpointError::Kind::Corrupt, "checkpoint header is malformed");
  } catch (const nlohmann::json::exception&) {
    throw CheckpointError(CheckpointError::Kind::Corrupt, "checkpoint header is malformed");
  }

  try {
    ckpt.vocab = Vocabulary::from_text(read_block(in));
  } catch (const ParseError& e) {
    throw CheckpointError(CheckpointError::Kind::Corrupt, std::string("checkpoint vocabulary block: ") + e.what());
  }

  const std::uint32_t tensor_count = read_pod<std::uint32_t>(in);
  std::unordered_map<std::string, Tensor> by_name;
  for (std::uint32_t i = 0; i < tensor_count; ++i) {
    NamedTensor nt = read_tensor(in);
    by_name.emplace(std::move(nt.name), std::move(nt.tensor));
  }

  ckpt.params.dims = ckpt.config.dims(ckpt.vocab.size());
  ckpt.params = ModelParams::init(ckpt.params.dims, 0);
  auto take = [&by_name](const std::string& name) -> Tensor {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw CheckpointError(CheckpointError::Kind::Corrupt, "checkpoint is missing tensor '" + name + "'");
    }
    return std::move(it->second);
  };
  ckpt.params.visit([&](const std::string& name, Tensor& t) {
    Tensor loaded = take(name);
    if (loaded.shape != t.shape) {
      throw CheckpointError(CheckpointError::Kind::Corrupt,
                            "checkpoint tensor '" + name + "' has shape " + shape_str(loaded.shape) +
                                ", expected " + shape_str(t.shape));
    }
    t = std::move(loaded);
  });
  ckpt.params.visit([&](const std::string& name, Tensor& t) {
    ckpt.optimizer.first_moment.push_back(take("adam.m/" + name));
    ckpt.optimizer.second_moment.push_back(take("adam.v/" + name));
    if (ckpt.optimizer.first_moment.back().shape != t.shape ||
        ckpt.optimizer.second_moment.back().shape != t.shape) {
      throw CheckpointError(CheckpointError::Kind::Corrupt,
                            "checkpoint optimizer moments for '" + name + "' have the wrong shape");
    }
  });
  return ckpt;
}

namespace {

double document_loss(Tape& tape, const Document& doc, const Vocabulary& vocab, const ModelParams& params,
                     const TrainConfig& cfg, TeacherForced* out_forward, Tensor* out_loss) {
  const std::vector<int> title_ids = vocab.encode(doc.title);
  const std::vector<int> gold_ids = vocab.encode(doc.abstract);
  TeacherForced fwd = forward_teacher_forced(tape, title_ids, gold_ids, params, cfg.iterations, cfg.max_len);
  Tensor loss = multi_draft_loss(tape, fwd.logits, gold_ids);
  const double value = loss.scalar();
  if (out_forward) *out_forward = std::move(fwd);
  if (out_loss) *out_loss = std::move(loss);
  return value;
}

double mean_split_loss(const std::vector<Document>& docs, const Vocabulary& vocab, const ModelParams& params,
                       const TrainConfig& cfg) {
  double total = 0.0;
  for (const Document& doc : docs) {
    Tape tape;
    total += document_loss(tape, doc, vocab, params, cfg, nullptr, nullptr);
  }
  return total / static_cast<double>(docs.size());
}

}  // namespace

TrainResult train(const CorpusSplit& corpus, const Vocabulary& vocab, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (corpus.train.empty()) throw ArgumentError("train: empty training split");
  if (vocab.size() > config.vocab_cap) {
    throw ArgumentError("train: vocabulary size " + std::to_string(vocab.size()) + " exceeds vocab_cap " +
                        std::to_string(config.vocab_cap) + "; truncate the vocabulary first");
  }

  ModelParams params = ModelParams::init(config.dims(vocab.size()), config.seed);
  OptimizerState opt = OptimizerState::for_params(params);

  TrainResult result;
  result.best.config = config;
  result.best.vocab = vocab;
  result.best.params = params;
  result.best.optimizer = opt;

  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t stale_epochs = 0;

  std::vector<std::size_t> order(corpus.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng shuffle_rng(config.seed ^ (0xe9ea7ull * epoch));
    shuffle_rng.shuffle(order);

    double epoch_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<Tensor> batch_grads;
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t doc_index = order[b];
        Tape tape;
        TeacherForced fwd;
        Tensor loss;
        const double value =
            document_loss(tape, corpus.train[doc_index], vocab, params, config, &fwd, &loss);
        if (!std::isfinite(value)) {
          throw NumericError("train: non-finite loss on document " + std::to_string(doc_index) + " in epoch " +
                             std::to_string(epoch));
        }
        epoch_total += value;
        tape.backward(loss);

        std::size_t slot = 0;
        if (batch_grads.empty()) {
          fwd.taped.visit([&](const std::string&, Tensor& t) { batch_grads.push_back(tape.grad(t)); });
        } else {
          fwd.taped.visit([&](const std::string&, Tensor& t) {
            const Tensor& g = tape.grad(t);
            std::vector<double>& acc = batch_grads[slot++].values;
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g.values[i];
          });
        }
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (Tensor& g : batch_grads) {
        for (double& v : g.values) v *= inv;
      }
      optimizer_step(params, batch_grads, opt, config.learning_rate, config.clip_norm);
    }

    EpochLoss entry;
    entry.epoch = epoch;
    entry.train_loss = epoch_total / static_cast<double>(order.size());
    entry.validation_loss = corpus.validation.empty()
                                ? entry.train_loss
                                : mean_split_loss(corpus.validation, vocab, params, config);
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);

    if (entry.validation_loss < best_loss) {
      best_loss = entry.validation_loss;
      stale_epochs = 0;
      result.best.params = params;
      result.best.optimizer = opt;
      result.best.epoch = epoch;
    } else if (++stale_epochs >= config.patience) {
      break;
    }
  }
  return result;
}

}  // namespace wenet
