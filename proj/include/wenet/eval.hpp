#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "wenet/corpus.hpp"
#include "wenet/model.hpp"

namespace wenet {

using TokenSeq = std::vector<std::string>;

// LCS-based F1: P = lcs/|hyp|, R = lcs/|ref|, score = 2PR/(P+R).
double rouge_l(std::span<const std::string> hyp, std::span<const std::string> ref);

// Exact-surface-match METEOR-style score: maximum one-to-one token matching
// with the fewest chunks among maximum matchings, F = PR/(0.9P + 0.1R),
// penalty = 0.5 * (chunks/m)^3. No stemming, synonymy, or paraphrase tables.
double meteor_exact(std::span<const std::string> hyp, std::span<const std::string> ref);

// n-gram types (n = 1..6) seen in a training corpus.
class NGramIndex {
 public:
  static constexpr int kMaxN = 6;

  static NGramIndex build(const std::vector<TokenSeq>& docs);
  bool contains(int n, const std::string& key) const;
  std::size_t size(int n) const;

  static std::string ngram_key(std::span<const std::string> tokens, std::size_t start, int n);

 private:
  std::array<std::unordered_set<std::string>, kMaxN> grams_;
};

struct PlagiarismResult {
  double percent = 0.0;
  bool undefined = false;  // no n-grams of this length existed in the test docs
};

// Share of distinct test n-gram types that also occur in the index.
PlagiarismResult ngram_plagiarism(const NGramIndex& index, const std::vector<TokenSeq>& test_docs, int n);

struct DocScore {
  double rouge = 0.0;
  double meteor = 0.0;
  std::size_t hyp_len = 0;
};

struct EvalReport {
  double rouge_l = 0.0;
  double meteor = 0.0;
  std::array<PlagiarismResult, NGramIndex::kMaxN> plagiarism{};
  std::size_t count = 0;
  std::vector<DocScore> per_doc;

  // {"rouge_l": ..., "meteor": ..., "plagiarism": {"1": ...}, "count": ...}
  std::string to_json() const;
};

// Scores already-generated abstracts against the gold test abstracts and the
// training-corpus n-gram index. Empty hypotheses score zero and are counted.
EvalReport score_generated(const std::vector<TokenSeq>& hyps, const CorpusSplit& split);

// Strips the trailing end-of-sequence marker and decodes to tokens.
TokenSeq draft_to_tokens(const Draft& draft, const Vocabulary& vocab);

// Generates draft X^(iterations) for every test title and scores it.
EvalReport evaluate_corpus(const ModelParams& params, const Vocabulary& vocab, const CorpusSplit& split,
                           std::size_t iterations, std::size_t max_len);

}  // namespace wenet
