// Times the serial reference kernels against the OpenMP kernels at the
// matrix shapes the model actually produces, then one full training step.
// Run manually: build/bench_kernels [repeats]

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <cstdlib>
#include <string>
#include <vector>

#include "wenet/corpus.hpp"
#include "wenet/kernels.hpp"
#include "wenet/model.hpp"
#include "wenet/rng.hpp"
#include "wenet/tensor.hpp"
#include "wenet/train.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

using Clock = std::chrono::steady_clock;

double time_best_of(int repeats, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = Clock::now();
    fn();
    const auto t1 = Clock::now();
    best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
  }
  return best;
}

std::vector<double> random_values(std::size_t n, wenet::Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

void bench_matmul(const char* label, std::size_t m, std::size_t k, std::size_t n, int repeats) {
  wenet::Rng rng(99);
  const std::vector<double> a = random_values(m * k, rng);
  const std::vector<double> b = random_values(k * n, rng);
  std::vector<double> c(m * n);

  const double serial = time_best_of(
      repeats, [&] { wenet::kernels::serial::matmul(a.data(), b.data(), c.data(), m, k, n); });
  const double par = time_best_of(
      repeats, [&] { wenet::kernels::parallel::matmul(a.data(), b.data(), c.data(), m, k, n); });
  const double gflops = 2.0 * static_cast<double>(m * k * n) * 1e-9;
  std::printf("%-28s %5zux%-5zux%-5zu serial %8.3f ms (%6.2f GF/s)   omp %8.3f ms (%6.2f GF/s)   speedup %.2fx\n",
              label, m, k, n, serial * 1e3, gflops / serial, par * 1e3, gflops / par, serial / par);
}

wenet::CorpusSplit synthetic_corpus(std::size_t docs, std::size_t title_len, std::size_t abstract_len) {
  wenet::Rng rng(7);
  const std::vector<std::string> words = {"model",  "neural", "language", "parsing", "corpus",
                                          "graph",  "kernel", "sequence", "lexical", "semantic"};
  wenet::CorpusSplit split;
  for (std::size_t d = 0; d < docs; ++d) {
    wenet::Document doc;
    for (std::size_t i = 0; i < title_len; ++i) doc.title.push_back(words[rng.below(words.size())]);
    for (std::size_t i = 0; i < abstract_len; ++i) doc.abstract.push_back(words[rng.below(words.size())]);
    split.train.push_back(doc);
  }
  return split;
}

void bench_train_step(int repeats) {
  const wenet::CorpusSplit split = synthetic_corpus(1, 9, 60);
  wenet::TrainConfig cfg;
  cfg.embedding_dim = 64;
  cfg.encoder_hidden = 64;
  cfg.decoder_hidden = 128;
  cfg.epochs = 1;
  cfg.iterations = 2;
  cfg.max_len = 80;
  const wenet::Vocabulary vocab = wenet::Vocabulary::build(split.train, 1);

  for (const auto mode : {wenet::kernels::Mode::Serial, wenet::kernels::Mode::Auto}) {
    wenet::kernels::set_mode(mode);
    const double t = time_best_of(repeats, [&] { wenet::train(split, vocab, cfg); });
    std::printf("train step (d=2, 60 tokens)  %-8s %8.3f ms\n",
                mode == wenet::kernels::Mode::Serial ? "serial" : "auto", t * 1e3);
  }
  wenet::kernels::set_mode(wenet::kernels::Mode::Auto);
}

}  // namespace

int main(int argc, char** argv) {
  const int repeats = argc > 1 ? std::atoi(argv[1]) : 5;
#ifdef _OPENMP
  std::printf("openmp: %d threads\n", omp_get_max_threads());
#else
  std::printf("openmp: disabled at build time\n");
#endif

  // Output projection over one decode step and over a teacher-forced block.
  bench_matmul("logits, greedy step", 1, 320, 5000, repeats);
  bench_matmul("logits, teacher block", 120, 320, 5000, repeats);
  bench_matmul("logits, large vocab", 120, 512, 20000, repeats);
  // Recurrent updates are too small to parallelize; shown for scale.
  bench_matmul("gru recurrence", 1, 128, 128, repeats);
  bench_matmul("attention keys", 30, 128, 128, repeats);

  bench_train_step(repeats);
  return 0;
}
