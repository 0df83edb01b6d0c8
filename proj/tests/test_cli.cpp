#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#ifndef WENET_CLI_PATH
#error "WENET_CLI_PATH must point at the built binary"
#endif

namespace {

namespace fs = std::filesystem;

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

RunResult run_cli(const std::string& args) {
  static int counter = 0;
  const fs::path out = fs::temp_directory_path() / ("wenet_cli_out_" + std::to_string(counter) + ".txt");
  const fs::path err = fs::temp_directory_path() / ("wenet_cli_err_" + std::to_string(counter) + ".txt");
  ++counter;
  const std::string cmd =
      std::string(WENET_CLI_PATH) + " " + args + " > " + out.string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  RunResult result;
  result.exit_code = WEXITSTATUS(status);
  result.out = slurp(out);
  result.err = slurp(err);
  fs::remove(out);
  fs::remove(err);
  return result;
}

const char* kCorpusJsonl =
    "{\"title\": \"relation extraction methods\", \"abstract\": \"we study relation extraction with web based features\"}\n"
    "{\"title\": \"neural parsing models\", \"abstract\": \"a neural model for dependency parsing of long sentences\"}\n"
    "{\"title\": \"machine translation quality\", \"abstract\": \"improving machine translation quality with attention\"}\n"
    "{\"title\": \"word sense disambiguation\", \"abstract\": \"word sense disambiguation using support vector machines\"}\n"
    "{\"title\": \"semantic role labeling\", \"abstract\": \"semantic role labeling with recurrent neural networks\"}\n"
    "{\"title\": \"text summarization systems\", \"abstract\": \"abstractive text summarization with copy mechanisms\"}\n"
    "{\"title\": \"question answering corpora\", \"abstract\": \"building corpora for open domain question answering\"}\n"
    "{\"title\": \"sentiment analysis tweets\", \"abstract\": \"sentiment analysis of tweets with limited supervision\"}\n"
    "{\"title\": \"coreference resolution chains\", \"abstract\": \"clustering mention chains for coreference resolution\"}\n"
    "{\"title\": \"topic models documents\", \"abstract\": \"scalable topic models for large document collections\"}\n";

const char* kTinyConfig =
    "# desk-scale smoke settings\n"
    "embedding_dim = 8\n"
    "encoder_hidden = 8\n"
    "vocab_cap = 500\n"
    "iterations = 1\n"
    "learning_rate = 0.002\n"
    "epochs = 2\n"
    "patience = 10\n"
    "seed = 5\n"
    "max_len = 12\n";

struct Workspace {
  fs::path dir;
  Workspace() {
    dir = fs::temp_directory_path() / "wenet_cli_ws";
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ofstream(dir / "corpus.jsonl", std::ios::binary) << kCorpusJsonl;
    std::ofstream(dir / "tiny.conf", std::ios::binary) << kTinyConfig;
  }
  ~Workspace() { fs::remove_all(dir); }
  std::string path(const char* name) const { return (dir / name).string(); }
};

}  // namespace

TEST_CASE("bad invocations exit with usage status") {
  CHECK(run_cli("frobnicate").exit_code == 1);
  CHECK(run_cli("generate --title only").exit_code == 1);  // missing --checkpoint
}

TEST_CASE("full pipeline: prepare, train, generate, evaluate, plagcheck, sweep") {
  Workspace ws;

  // prepare
  const RunResult prep =
      run_cli("prepare --input " + ws.path("corpus.jsonl") + " --out-dir " + ws.path("data") +
              " --seed 11 --min-freq 1");
  REQUIRE(prep.exit_code == 0);
  for (const char* name : {"train.jsonl", "valid.jsonl", "test.jsonl", "vocab.txt"}) {
    CHECK(fs::exists(ws.dir / "data" / name));
  }
  // 10 documents split 8/1/1.
  auto count_lines = [](const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) n += !line.empty();
    return n;
  };
  CHECK(count_lines(ws.dir / "data/train.jsonl") == 8);
  CHECK(count_lines(ws.dir / "data/valid.jsonl") == 1);
  CHECK(count_lines(ws.dir / "data/test.jsonl") == 1);

  // Same flags, same seed: byte-identical outputs.
  REQUIRE(run_cli("prepare --input " + ws.path("corpus.jsonl") + " --out-dir " + ws.path("data2") +
                  " --seed 11 --min-freq 1")
              .exit_code == 0);
  CHECK(slurp(ws.dir / "data/train.jsonl") == slurp(ws.dir / "data2/train.jsonl"));
  CHECK(slurp(ws.dir / "data/vocab.txt") == slurp(ws.dir / "data2/vocab.txt"));

  // train (twice, determinism of stdout and checkpoint bytes)
  const std::string train_args = "train --config " + ws.path("tiny.conf") + " --data-dir " +
                                 ws.path("data") + " --out " + ws.path("model.ckpt");
  const RunResult t1 = run_cli(train_args);
  REQUIRE(t1.exit_code == 0);
  CHECK(t1.out.find("epoch=1") != std::string::npos);
  const std::string ckpt_bytes = slurp(ws.dir / "model.ckpt");
  const RunResult t2 = run_cli("train --config " + ws.path("tiny.conf") + " --data-dir " + ws.path("data") +
                               " --out " + ws.path("model2.ckpt"));
  REQUIRE(t2.exit_code == 0);
  // Identical loss logs; the trailing line echoes the (different) out path.
  auto log_lines = [](const std::string& text) { return text.substr(0, text.rfind("saved checkpoint")); };
  CHECK(log_lines(t1.out) == log_lines(t2.out));
  CHECK(ckpt_bytes == slurp(ws.dir / "model2.ckpt"));

  // generate: d = 0 prints exactly one draft, d = 2 prints three.
  const RunResult g0 =
      run_cli("generate --checkpoint " + ws.path("model.ckpt") + " --title \"neural parsing\" --iterations 0");
  REQUIRE(g0.exit_code == 0);
  CHECK(g0.out.find("X(0):") != std::string::npos);
  CHECK(g0.out.find("X(1):") == std::string::npos);
  const RunResult g2 =
      run_cli("generate --checkpoint " + ws.path("model.ckpt") + " --title \"neural parsing\" --iterations 2");
  REQUIRE(g2.exit_code == 0);
  CHECK(g2.out.find("X(0):") != std::string::npos);
  CHECK(g2.out.find("X(1):") != std::string::npos);
  CHECK(g2.out.find("X(2):") != std::string::npos);

  // evaluate: stdout is the report JSON with the documented keys.
  const RunResult ev =
      run_cli("evaluate --checkpoint " + ws.path("model.ckpt") + " --data-dir " + ws.path("data") +
              " --iterations 1");
  REQUIRE(ev.exit_code == 0);
  const nlohmann::json report = nlohmann::json::parse(ev.out, nullptr, false);
  REQUIRE(!report.is_discarded());
  CHECK(report.contains("rouge_l"));
  CHECK(report.contains("meteor"));
  CHECK(report.contains("plagiarism"));
  CHECK(report.contains("count"));
  CHECK(report["count"].get<int>() == 1);

  // plagcheck with test contained in train prints 100.0 at n = 1.
  const RunResult plag = run_cli("plagcheck --train-file " + ws.path("corpus.jsonl") + " --test-file " +
                                 ws.path("data/test.jsonl") + " --max-n 3");
  REQUIRE(plag.exit_code == 0);
  CHECK(plag.out.find("100.0") != std::string::npos);

  // sweep over a single iteration count stays fast and emits JSON.
  const RunResult sweep = run_cli("sweep --config " + ws.path("tiny.conf") + " --data-dir " + ws.path("data") +
                                  " --max-iterations 1");
  REQUIRE(sweep.exit_code == 0);
  CHECK(sweep.out.find("meteor") != std::string::npos);
  const auto last_newline = sweep.out.find_last_of('\n', sweep.out.size() - 2);
  const std::string json_line = sweep.out.substr(last_newline + 1);
  CHECK(!nlohmann::json::parse(json_line, nullptr, false).is_discarded());
}

TEST_CASE("config and data errors map to the documented exit codes") {
  Workspace ws;
  std::ofstream(ws.dir / "bad.conf") << "embedding_dim = 8\nunknown_key = 3\n";
  CHECK(run_cli("train --config " + ws.path("bad.conf") + " --data-dir x --out y").exit_code == 1);

  std::ofstream(ws.dir / "badratio.conf") << "encoder_hidden = 8\ndecoder_hidden = 8\n";
  CHECK(run_cli("train --config " + ws.path("badratio.conf") + " --data-dir x --out y").exit_code == 1);

  // Malformed corpus: data error.
  std::ofstream(ws.dir / "broken.jsonl") << "{\"title\": 17}\n";
  CHECK(run_cli("prepare --input " + ws.path("broken.jsonl") + " --out-dir " + ws.path("d")).exit_code == 2);

  // Not a checkpoint: data error.
  std::ofstream(ws.dir / "junk.ckpt") << "junk";
  CHECK(run_cli("generate --checkpoint " + ws.path("junk.ckpt") + " --title \"x y\"").exit_code == 2);

  // Missing data dir contents: data error.
  CHECK(run_cli("evaluate --checkpoint " + ws.path("junk.ckpt") + " --data-dir " + ws.path("nowhere"))
            .exit_code == 2);
}
