#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace wenet {

// One title/abstract pair, already tokenized.
struct Document {
  std::vector<std::string> title;
  std::vector<std::string> abstract;
};

// Raw record as read from (and written back to) a JSONL corpus file.
struct RawRecord {
  std::string title;
  std::string abstract;
};

// Lowercase, split on whitespace, then split the punctuation characters
// .,;:!?()"' into their own tokens.
std::vector<std::string> tokenize(std::string_view text);

// Abstracts are clipped to this many tokens when a corpus is loaded.
inline constexpr std::size_t kMaxAbstractTokens = 200;

// Token <-> id map. Ids 0..3 are reserved; real tokens start at 4, ordered
// by descending corpus frequency with lexicographic tie-breaks.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kSos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kReserved = 4;

  // max_size of 0 means unlimited; otherwise the vocabulary keeps the
  // max_size - 4 most frequent tokens.
  static Vocabulary build(const std::vector<Document>& docs, std::size_t min_freq, std::size_t max_size = 0);

  std::size_t size() const { return id_to_token_.size(); }
  int id_of(const std::string& token) const;  // kUnk when absent
  const std::string& token_of(int id) const;  // IndexError when out of range

  std::vector<int> encode(std::span<const std::string> tokens) const;
  std::vector<std::string> decode(std::span<const int> ids) const;

  // Keeps ids [0, max_size); ids are frequency-ordered so this drops the
  // rarest tokens and leaves all remaining ids unchanged.
  Vocabulary truncated(std::size_t max_size) const;

  std::string to_text() const;
  static Vocabulary from_text(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  Vocabulary();
  void push_token(const std::string& token);

  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

struct CorpusSplit {
  std::vector<Document> train;
  std::vector<Document> validation;
  std::vector<Document> test;
  std::uint64_t split_seed = 0;
};

// Parses a JSONL corpus; each line is {"title": ..., "abstract": ...}.
// Malformed or empty-after-tokenization records raise ParseError with the
// line number.
std::vector<RawRecord> load_raw_corpus(const std::filesystem::path& path);
Document tokenize_record(const RawRecord& raw);
std::vector<Document> load_corpus(const std::filesystem::path& path);

// Shuffled index partition: floor(0.8n) train, floor(0.1n) validation,
// remainder test.
struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};
SplitIndices split_indices(std::size_t count, std::uint64_t seed);

CorpusSplit load_and_split(const std::filesystem::path& path, std::uint64_t seed);

void save_raw_corpus(const std::vector<RawRecord>& records, const std::filesystem::path& path);

}  // namespace wenet
