#include "wenet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include <json.hpp>

#include "wenet/error.hpp"
#include "wenet/token_ids.hpp"

namespace wenet {

namespace {

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  const std::size_t n = b.size();
  std::vector<std::size_t> prev(n + 1, 0), cur(n + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[n];
}

// Minimum chunk count over all maximum one-to-one exact matchings.
// Depth-first over hyp positions with match-before-skip ordering; the first
// completed path is a valid maximum matching, so a best value always exists
// even when the node budget cuts the search short on adversarial inputs.
class ChunkSearch {
 public:
  ChunkSearch(std::span<const int> hyp, std::span<const int> ref, int token_kinds)
      : hyp_(hyp), ref_(ref), used_(ref.size(), 0), need_(token_kinds, 0), avail_(token_kinds, 0) {
    std::vector<int> ref_count(token_kinds, 0);
    for (int t : ref_) ++ref_count[t];
    for (int t : hyp_) ++avail_[t];
    for (int t = 0; t < token_kinds; ++t) need_[t] = std::min(avail_[t], ref_count[t]);
    for (int n : need_) total_need_ += n;
    by_token_.resize(token_kinds);
    for (std::size_t j = 0; j < ref_.size(); ++j) by_token_[ref_[j]].push_back(j);
  }

  int total_matches() const { return total_need_; }

  int min_chunks() {
    if (total_need_ == 0) return 0;
    best_ = total_need_ + 1;
    dfs(0, -2, 0, 0);
    return best_;
  }

 private:
  static constexpr std::size_t kNodeBudget = 2'000'000;

  void dfs(std::size_t i, std::ptrdiff_t last_j, int chunks, int matched) {
    if (matched == total_need_) {
      best_ = std::min(best_, chunks);
      return;
    }
    if (i == hyp_.size() || nodes_ >= kNodeBudget) return;
    // Any further match costs at least one new chunk unless it can extend
    // the run ending at last_j.
    const bool can_extend = last_j >= 0 && static_cast<std::size_t>(last_j + 1) < ref_.size() &&
                            !used_[last_j + 1] && ref_[last_j + 1] == hyp_[i] && need_[hyp_[i]] > 0;
    if (chunks + (can_extend ? 0 : 1) >= best_) return;
    ++nodes_;

    const int t = hyp_[i];
    if (need_[t] > 0) {
      if (can_extend) {
        take(i, last_j + 1, chunks, matched);
      }
      for (std::size_t j : by_token_[t]) {
        if (used_[j] || static_cast<std::ptrdiff_t>(j) == last_j + 1) continue;
        take(i, static_cast<std::ptrdiff_t>(j), chunks + 1, matched);
      }
    }
    // Skip this hyp position if enough later occurrences remain.
    if (avail_[t] - 1 >= need_[t]) {
      --avail_[t];
      dfs(i + 1, -2, chunks, matched);
      ++avail_[t];
    }
  }

  void take(std::size_t i, std::ptrdiff_t j, int chunks, int matched) {
    const int t = hyp_[i];
    used_[j] = 1;
    --need_[t];
    --avail_[t];
    dfs(i + 1, j, chunks, matched + 1);
    ++avail_[t];
    ++need_[t];
    used_[j] = 0;
  }

  std::span<const int> hyp_;
  std::span<const int> ref_;
  std::vector<char> used_;
  std::vector<int> need_;
  std::vector<int> avail_;
  std::vector<std::vector<std::size_t>> by_token_;
  int total_need_ = 0;
  int best_ = 0;
  std::size_t nodes_ = 0;
};

}  // namespace

double rouge_l(std::span<const std::string> hyp, std::span<const std::string> ref) {
  if (hyp.empty() || ref.empty()) throw ArgumentError("rouge_l: sequences must be non-empty");
  const std::size_t lcs = lcs_length(hyp, ref);
  if (lcs == 0) return 0.0;
  const double p = static_cast<double>(lcs) / static_cast<double>(hyp.size());
  const double r = static_cast<double>(lcs) / static_cast<double>(ref.size());
  return 2.0 * p * r / (p + r);
}

double meteor_exact(std::span<const std::string> hyp, std::span<const std::string> ref) {
  if (hyp.empty() || ref.empty()) throw ArgumentError("meteor_exact: sequences must be non-empty");

  // Intern tokens shared by both sequences.
  std::unordered_map<std::string, int> intern;
  auto to_ids = [&intern](std::span<const std::string> seq) {
    std::vector<int> ids;
    ids.reserve(seq.size());
    for (const std::string& t : seq) {
      auto [it, inserted] = intern.emplace(t, static_cast<int>(intern.size()));
      ids.push_back(it->second);
    }
    return ids;
  };
  const std::vector<int> hyp_ids = to_ids(hyp);
  const std::vector<int> ref_ids = to_ids(ref);

  ChunkSearch search(hyp_ids, ref_ids, static_cast<int>(intern.size()));
  const int m = search.total_matches();
  if (m == 0) return 0.0;
  const int chunks = search.min_chunks();

  const double p = static_cast<double>(m) / static_cast<double>(hyp.size());
  const double r = static_cast<double>(m) / static_cast<double>(ref.size());
  const double f = p * r / (0.9 * p + 0.1 * r);
  const double frag = static_cast<double>(chunks) / static_cast<double>(m);
  return f * (1.0 - 0.5 * frag * frag * frag);
}

std::string NGramIndex::ngram_key(std::span<const std::string> tokens, std::size_t start, int n) {
  std::string key;
  for (int i = 0; i < n; ++i) {
    if (i) key += '\x1f';
    key += tokens[start + static_cast<std::size_t>(i)];
  }
  return key;
}

NGramIndex NGramIndex::build(const std::vector<TokenSeq>& docs) {
  NGramIndex index;
  for (const TokenSeq& doc : docs) {
    for (int n = 1; n <= kMaxN; ++n) {
      if (doc.size() < static_cast<std::size_t>(n)) break;
      for (std::size_t s = 0; s + static_cast<std::size_t>(n) <= doc.size(); ++s) {
        index.grams_[n - 1].insert(ngram_key(doc, s, n));
      }
    }
  }
  return index;
}

bool NGramIndex::contains(int n, const std::string& key) const {
  return grams_[n - 1].count(key) > 0;
}

std::size_t NGramIndex::size(int n) const { return grams_[n - 1].size(); }

PlagiarismResult ngram_plagiarism(const NGramIndex& index, const std::vector<TokenSeq>& test_docs, int n) {
  if (n < 1 || n > NGramIndex::kMaxN) {
    throw ArgumentError("ngram_plagiarism: n must be within 1..6, got " + std::to_string(n));
  }
  std::unordered_set<std::string> types;
  for (const TokenSeq& doc : test_docs) {
    if (doc.size() < static_cast<std::size_t>(n)) continue;
    for (std::size_t s = 0; s + static_cast<std::size_t>(n) <= doc.size(); ++s) {
      types.insert(NGramIndex::ngram_key(doc, s, n));
    }
  }
  PlagiarismResult result;
  if (types.empty()) {
    result.undefined = true;
    return result;
  }
  std::size_t hits = 0;
  for (const std::string& key : types) hits += index.contains(n, key);
  result.percent = 100.0 * static_cast<double>(hits) / static_cast<double>(types.size());
  return result;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["rouge_l"] = rouge_l;
  j["meteor"] = meteor;
  nlohmann::ordered_json plag;
  for (int n = 1; n <= NGramIndex::kMaxN; ++n) {
    plag[std::to_string(n)] = plagiarism[n - 1].percent;
  }
  j["plagiarism"] = plag;
  j["count"] = count;
  return j.dump();
}

EvalReport score_generated(const std::vector<TokenSeq>& hyps, const CorpusSplit& split) {
  if (split.test.empty()) throw ArgumentError("score_generated: empty test split");
  if (hyps.size() != split.test.size()) {
    throw ArgumentError("score_generated: " + std::to_string(hyps.size()) + " hypotheses for " +
                        std::to_string(split.test.size()) + " test documents");
  }

  EvalReport report;
  report.count = hyps.size();
  report.per_doc.resize(hyps.size());
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    DocScore& doc = report.per_doc[i];
    doc.hyp_len = hyps[i].size();
    if (!hyps[i].empty()) {
      doc.rouge = rouge_l(hyps[i], split.test[i].abstract);
      doc.meteor = meteor_exact(hyps[i], split.test[i].abstract);
    }
    report.rouge_l += doc.rouge;
    report.meteor += doc.meteor;
  }
  report.rouge_l /= static_cast<double>(report.count);
  report.meteor /= static_cast<double>(report.count);

  std::vector<TokenSeq> train_abstracts;
  train_abstracts.reserve(split.train.size());
  for (const Document& doc : split.train) train_abstracts.push_back(doc.abstract);
  const NGramIndex index = NGramIndex::build(train_abstracts);
  for (int n = 1; n <= NGramIndex::kMaxN; ++n) {
    report.plagiarism[n - 1] = ngram_plagiarism(index, hyps, n);
  }
  return report;
}

TokenSeq draft_to_tokens(const Draft& draft, const Vocabulary& vocab) {
  std::span<const int> ids = draft.tokens;
  if (!ids.empty() && ids.back() == kEosId) ids = ids.first(ids.size() - 1);
  return vocab.decode(ids);
}

EvalReport evaluate_corpus(const ModelParams& params, const Vocabulary& vocab, const CorpusSplit& split,
                           std::size_t iterations, std::size_t max_len) {
  if (split.test.empty()) throw ArgumentError("evaluate_corpus: empty test split");

  std::vector<TokenSeq> hyps(split.test.size());
  // Generation is independent per document; each iteration owns its records.
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(split.test.size()); ++i) {
    const std::vector<int> title_ids = vocab.encode(split.test[static_cast<std::size_t>(i)].title);
    const std::vector<Draft> drafts = generate(title_ids, params, iterations, max_len);
    hyps[static_cast<std::size_t>(i)] = draft_to_tokens(drafts.back(), vocab);
  }
  return score_generated(hyps, split);
}

}  // namespace wenet
