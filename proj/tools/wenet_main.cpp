#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "wenet/corpus.hpp"
#include "wenet/error.hpp"
#include "wenet/eval.hpp"
#include "wenet/model.hpp"
#include "wenet/train.hpp"

namespace fs = std::filesystem;

namespace {

// Command-line misuse, distinct from data errors: exits with status 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CliConfig {
  wenet::TrainConfig train;
  std::string data_dir;
  std::string out;
};

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::uint64_t parse_uint(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "' needs a non-negative integer, got '" + value + "'");
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "' needs a number, got '" + value + "'");
  }
}

// key = value lines; '#' starts a comment; unknown keys are rejected.
CliConfig load_cli_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw wenet::IoError("cannot open config file " + path);

  CliConfig cfg;
  bool saw_encoder = false, saw_decoder = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path + " line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw UsageError(path + " line " + std::to_string(line_no) + ": expected 'key = value'");
    }

    if (key == "embedding_dim") {
      cfg.train.embedding_dim = parse_uint(key, value);
    } else if (key == "encoder_hidden") {
      cfg.train.encoder_hidden = parse_uint(key, value);
      saw_encoder = true;
    } else if (key == "decoder_hidden") {
      cfg.train.decoder_hidden = parse_uint(key, value);
      saw_decoder = true;
    } else if (key == "vocab_cap") {
      cfg.train.vocab_cap = parse_uint(key, value);
    } else if (key == "iterations") {
      cfg.train.iterations = parse_uint(key, value);
    } else if (key == "learning_rate") {
      cfg.train.learning_rate = parse_double(key, value);
    } else if (key == "clip_norm") {
      cfg.train.clip_norm = parse_double(key, value);
    } else if (key == "batch_size") {
      cfg.train.batch_size = parse_uint(key, value);
    } else if (key == "epochs") {
      cfg.train.epochs = parse_uint(key, value);
    } else if (key == "patience") {
      cfg.train.patience = parse_uint(key, value);
    } else if (key == "seed") {
      cfg.train.seed = parse_uint(key, value);
    } else if (key == "max_len") {
      cfg.train.max_len = parse_uint(key, value);
    } else if (key == "data_dir") {
      cfg.data_dir = value;
    } else if (key == "out") {
      cfg.out = value;
    } else {
      throw UsageError(path + " line " + std::to_string(line_no) + ": unknown config key '" + key + "'");
    }
  }
  if (saw_encoder && !saw_decoder) cfg.train.decoder_hidden = 2 * cfg.train.encoder_hidden;
  try {
    cfg.train.validate();
  } catch (const wenet::ArgumentError& e) {
    throw UsageError(std::string("config file ") + path + ": " + e.what());
  }
  return cfg;
}

wenet::CorpusSplit load_split_dir(const std::string& data_dir) {
  const fs::path dir(data_dir);
  for (const char* name : {"train.jsonl", "valid.jsonl", "test.jsonl", "vocab.txt"}) {
    if (!fs::exists(dir / name)) {
      throw wenet::IoError("data dir " + data_dir + " is missing " + name + " (run `prepare` first)");
    }
  }
  wenet::CorpusSplit split;
  split.train = wenet::load_corpus(dir / "train.jsonl");
  split.validation = wenet::load_corpus(dir / "valid.jsonl");
  split.test = wenet::load_corpus(dir / "test.jsonl");
  return split;
}

void print_loss_log(const std::vector<wenet::EpochLoss>& log) {
  for (const wenet::EpochLoss& entry : log) {
    std::printf("epoch=%zu train_loss=%.12g val_loss=%.12g\n", entry.epoch, entry.train_loss,
                entry.validation_loss);
  }
}

int cmd_prepare(const std::string& input, const std::string& out_dir, std::uint64_t seed,
                std::size_t min_freq) {
  const std::vector<wenet::RawRecord> records = wenet::load_raw_corpus(input);
  const wenet::SplitIndices idx = wenet::split_indices(records.size(), seed);

  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  auto write_subset = [&](const std::vector<std::size_t>& indices, const char* name) {
    std::vector<wenet::RawRecord> subset;
    subset.reserve(indices.size());
    for (std::size_t i : indices) subset.push_back(records[i]);
    wenet::save_raw_corpus(subset, dir / name);
    return subset.size();
  };
  const std::size_t n_train = write_subset(idx.train, "train.jsonl");
  const std::size_t n_val = write_subset(idx.validation, "valid.jsonl");
  const std::size_t n_test = write_subset(idx.test, "test.jsonl");

  std::vector<wenet::Document> train_docs;
  train_docs.reserve(idx.train.size());
  for (std::size_t i : idx.train) train_docs.push_back(wenet::tokenize_record(records[i]));
  const wenet::Vocabulary vocab = wenet::Vocabulary::build(train_docs, min_freq);
  vocab.save(dir / "vocab.txt");

  std::printf("prepared %s: train=%zu valid=%zu test=%zu vocab=%zu (min_freq=%zu seed=%llu)\n",
              out_dir.c_str(), n_train, n_val, n_test, vocab.size(), min_freq,
              static_cast<unsigned long long>(seed));
  return 0;
}

void check_writable(const std::string& path) {
  const bool existed = fs::exists(path);
  std::ofstream probe(path, std::ios::binary | std::ios::app);
  if (!probe) throw wenet::IoError("cannot write to " + path);
  probe.close();
  if (!existed) fs::remove(path);
}

int cmd_train(const CliConfig& cfg) {
  if (cfg.data_dir.empty()) throw UsageError("train: --data-dir (or config key data_dir) is required");
  if (cfg.out.empty()) throw UsageError("train: --out (or config key out) is required");
  check_writable(cfg.out);

  const wenet::CorpusSplit split = load_split_dir(cfg.data_dir);
  wenet::Vocabulary vocab = wenet::Vocabulary::load(fs::path(cfg.data_dir) / "vocab.txt");
  vocab = vocab.truncated(cfg.train.vocab_cap);

  const wenet::TrainResult result =
      wenet::train(split, vocab, cfg.train, [](const wenet::EpochLoss& entry) {
        std::fprintf(stderr, "epoch %zu: train %.6f val %.6f\n", entry.epoch, entry.train_loss,
                     entry.validation_loss);
      });
  wenet::checkpoint_save(result.best, cfg.out);
  print_loss_log(result.log);
  std::printf("saved checkpoint %s (best epoch %zu)\n", cfg.out.c_str(), result.best.epoch);
  return 0;
}

int cmd_generate(const std::string& checkpoint, const std::string& title, std::optional<std::size_t> iterations) {
  const std::vector<std::string> title_tokens = wenet::tokenize(title);
  if (title_tokens.empty()) throw UsageError("generate: --title has no tokens");

  const wenet::Checkpoint ckpt = wenet::checkpoint_load(checkpoint);
  const std::size_t d = iterations.value_or(ckpt.config.iterations);
  const std::vector<int> title_ids = ckpt.vocab.encode(title_tokens);
  const std::vector<wenet::Draft> drafts =
      wenet::generate(title_ids, ckpt.params, d, ckpt.config.max_len);
  for (const wenet::Draft& draft : drafts) {
    const wenet::TokenSeq tokens = wenet::draft_to_tokens(draft, ckpt.vocab);
    std::string text;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (i) text += ' ';
      text += tokens[i];
    }
    std::printf("X(%d): %s\n", draft.iteration, text.c_str());
  }
  return 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& data_dir,
                 std::optional<std::size_t> iterations) {
  const wenet::Checkpoint ckpt = wenet::checkpoint_load(checkpoint);
  const wenet::CorpusSplit split = load_split_dir(data_dir);
  const std::size_t d = iterations.value_or(ckpt.config.iterations);
  const wenet::EvalReport report =
      wenet::evaluate_corpus(ckpt.params, ckpt.vocab, split, d, ckpt.config.max_len);

  std::fprintf(stderr, "evaluated %zu documents at d=%zu\n", report.count, d);
  std::fprintf(stderr, "  rouge_l %.4f  meteor %.4f\n", report.rouge_l, report.meteor);
  for (int n = 1; n <= wenet::NGramIndex::kMaxN; ++n) {
    const wenet::PlagiarismResult& p = report.plagiarism[n - 1];
    std::fprintf(stderr, "  plagiarism n=%d: %.1f%%%s\n", n, p.percent,
                 p.undefined ? " (no n-grams of this length)" : "");
  }
  std::printf("%s\n", report.to_json().c_str());
  return 0;
}

int cmd_plagcheck(const std::string& train_file, const std::string& test_file, int max_n) {
  if (max_n < 1 || max_n > wenet::NGramIndex::kMaxN) {
    throw UsageError("plagcheck: --max-n must be within 1..6");
  }
  std::vector<wenet::TokenSeq> train_abstracts, test_abstracts;
  for (const wenet::Document& doc : wenet::load_corpus(train_file)) train_abstracts.push_back(doc.abstract);
  for (const wenet::Document& doc : wenet::load_corpus(test_file)) test_abstracts.push_back(doc.abstract);
  const wenet::NGramIndex index = wenet::NGramIndex::build(train_abstracts);

  std::string header = "n      ";
  std::string values = "percent";
  for (int n = 1; n <= max_n; ++n) {
    const wenet::PlagiarismResult r = wenet::ngram_plagiarism(index, test_abstracts, n);
    if (r.undefined) {
      std::fprintf(stderr, "warning: test corpus has no %d-grams\n", n);
    }
    char cell[32];
    std::snprintf(cell, sizeof(cell), "%8d", n);
    header += cell;
    std::snprintf(cell, sizeof(cell), "%8.1f", r.percent);
    values += cell;
  }
  std::printf("%s\n%s\n", header.c_str(), values.c_str());
  return 0;
}

int cmd_sweep(const CliConfig& cfg, std::size_t max_iterations) {
  if (cfg.data_dir.empty()) throw UsageError("sweep: --data-dir (or config key data_dir) is required");
  if (max_iterations < 1) throw UsageError("sweep: --max-iterations must be at least 1");

  const wenet::CorpusSplit split = load_split_dir(cfg.data_dir);
  wenet::Vocabulary vocab = wenet::Vocabulary::load(fs::path(cfg.data_dir) / "vocab.txt");
  vocab = vocab.truncated(cfg.train.vocab_cap);

  std::vector<wenet::EvalReport> reports;
  for (std::size_t d = 1; d <= max_iterations; ++d) {
    wenet::TrainConfig train_cfg = cfg.train;
    train_cfg.iterations = d;
    std::fprintf(stderr, "sweep: training d=%zu\n", d);
    const wenet::TrainResult result = wenet::train(split, vocab, train_cfg);
    reports.push_back(
        wenet::evaluate_corpus(result.best.params, vocab, split, d, train_cfg.max_len));
  }

  std::string row_d = "d      ", row_m = "meteor ", row_r = "rouge_l";
  nlohmann::ordered_json j;
  for (std::size_t d = 1; d <= max_iterations; ++d) {
    const wenet::EvalReport& rep = reports[d - 1];
    char cell[32];
    std::snprintf(cell, sizeof(cell), "%8zu", d);
    row_d += cell;
    std::snprintf(cell, sizeof(cell), "%8.1f", 100.0 * rep.meteor);
    row_m += cell;
    std::snprintf(cell, sizeof(cell), "%8.1f", 100.0 * rep.rouge_l);
    row_r += cell;
    nlohmann::ordered_json entry;
    entry["meteor"] = rep.meteor;
    entry["rouge_l"] = rep.rouge_l;
    j[std::to_string(d)] = entry;
  }
  std::printf("%s\n%s\n%s\n", row_d.c_str(), row_m.c_str(), row_r.c_str());
  std::printf("%s\n", j.dump().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"writing-editing network: draft generation with iterative revision"};
  app.require_subcommand(1);

  // prepare
  auto* prepare = app.add_subcommand("prepare", "split a JSONL corpus and build the vocabulary");
  std::string in_path, out_dir;
  std::uint64_t prep_seed = 13;
  std::size_t min_freq = 2;
  prepare->add_option("--input", in_path, "JSONL corpus of {title, abstract} records")->required();
  prepare->add_option("--out-dir", out_dir, "output directory")->required();
  prepare->add_option("--seed", prep_seed, "shuffle seed");
  prepare->add_option("--min-freq", min_freq, "minimum token frequency kept in the vocabulary");

  // train
  auto* train_cmd = app.add_subcommand("train", "train on a prepared data directory");
  std::string config_path, data_dir, out_path;
  train_cmd->add_option("--config", config_path, "key = value config file");
  train_cmd->add_option("--data-dir", data_dir, "directory produced by prepare");
  train_cmd->add_option("--out", out_path, "checkpoint output path");

  // generate
  auto* gen = app.add_subcommand("generate", "generate drafts X(0)..X(d) for a title");
  std::string ckpt_path, title;
  std::optional<std::size_t> gen_iters;
  gen->add_option("--checkpoint", ckpt_path, "trained checkpoint")->required();
  gen->add_option("--title", title, "title text")->required();
  gen->add_option("--iterations", gen_iters, "editing passes (default: checkpoint config)");

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "score generated drafts on the test split");
  std::string eval_ckpt, eval_dir;
  std::optional<std::size_t> eval_iters;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "trained checkpoint")->required();
  eval_cmd->add_option("--data-dir", eval_dir, "directory produced by prepare")->required();
  eval_cmd->add_option("--iterations", eval_iters, "editing passes (default: checkpoint config)");

  // plagcheck
  auto* plag = app.add_subcommand("plagcheck", "n-gram overlap between two corpora");
  std::string plag_train, plag_test;
  int max_n = 6;
  plag->add_option("--train-file", plag_train, "training JSONL corpus")->required();
  plag->add_option("--test-file", plag_test, "test JSONL corpus")->required();
  plag->add_option("--max-n", max_n, "largest n-gram length");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "train and evaluate d = 1..max");
  std::string sweep_config, sweep_dir;
  std::size_t sweep_max = 6;
  sweep->add_option("--config", sweep_config, "key = value config file");
  sweep->add_option("--data-dir", sweep_dir, "directory produced by prepare");
  sweep->add_option("--max-iterations", sweep_max, "largest iteration count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }

  try {
    if (prepare->parsed()) return cmd_prepare(in_path, out_dir, prep_seed, min_freq);
    if (train_cmd->parsed()) {
      CliConfig cfg = config_path.empty() ? CliConfig{} : load_cli_config(config_path);
      if (!data_dir.empty()) cfg.data_dir = data_dir;
      if (!out_path.empty()) cfg.out = out_path;
      return cmd_train(cfg);
    }
    if (gen->parsed()) return cmd_generate(ckpt_path, title, gen_iters);
    if (eval_cmd->parsed()) return cmd_evaluate(eval_ckpt, eval_dir, eval_iters);
    if (plag->parsed()) return cmd_plagcheck(plag_train, plag_test, max_n);
    if (sweep->parsed()) {
      CliConfig cfg = sweep_config.empty() ? CliConfig{} : load_cli_config(sweep_config);
      if (!sweep_dir.empty()) cfg.data_dir = sweep_dir;
      return cmd_sweep(cfg, sweep_max);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const wenet::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
