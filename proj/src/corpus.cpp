#include "wenet/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "wenet/error.hpp"
#include "wenet/rng.hpp"

namespace wenet {

namespace {

constexpr std::string_view kPunct = ".,;:!?()\"'";

const std::array<std::string, 4> kReservedTokens = {"<pad>", "<s>", "</s>", "<unk>"};

bool is_punct(char c) { return kPunct.find(c) != std::string_view::npos; }

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      tokens.push_back(current);
      current.clear();
    }
  };
  for (char raw : text) {
    const unsigned char u = static_cast<unsigned char>(raw);
    const char c = (u < 0x80) ? static_cast<char>(std::tolower(u)) : raw;
    if (std::isspace(u)) {
      flush();
    } else if (is_punct(c)) {
      flush();
      tokens.push_back(std::string(1, c));
    } else {
      current.push_back(c);
    }
  }
  flush();
  return tokens;
}

Vocabulary::Vocabulary() {
  for (const std::string& t : kReservedTokens) id_to_token_.push_back(t);
}

void Vocabulary::push_token(const std::string& token) {
  token_to_id_.emplace(token, static_cast<int>(id_to_token_.size()));
  id_to_token_.push_back(token);
}

Vocabulary Vocabulary::build(const std::vector<Document>& docs, std::size_t min_freq, std::size_t max_size) {
  if (min_freq < 1) throw ArgumentError("build_vocab: min_freq must be at least 1");
  if (docs.empty()) throw ArgumentError("build_vocab: empty corpus");

  std::unordered_map<std::string, std::size_t> freq;
  for (const Document& doc : docs) {
    for (const std::string& t : doc.title) ++freq[t];
    for (const std::string& t : doc.abstract) ++freq[t];
  }

  std::vector<std::pair<std::string, std::size_t>> kept;
  kept.reserve(freq.size());
  for (auto& [token, count] : freq) {
    if (count >= min_freq) kept.emplace_back(token, count);
  }
  if (kept.empty()) throw ArgumentError("build_vocab: no token reaches min_freq " + std::to_string(min_freq));

  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (max_size > kReserved && kept.size() > max_size - kReserved) {
    kept.resize(max_size - kReserved);
  }

  Vocabulary vocab;
  for (const auto& [token, count] : kept) vocab.push_token(token);
  return vocab;
}

int Vocabulary::id_of(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
    throw IndexError("vocabulary id " + std::to_string(id) + " out of range (size " +
                     std::to_string(id_to_token_.size()) + ")");
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const std::string& t : tokens) ids.push_back(id_of(t));
  return ids;
}

std::vector<std::string> Vocabulary::decode(std::span<const int> ids) const {
  std::vector<std::string> tokens;
  tokens.reserve(ids.size());
  for (int id : ids) tokens.push_back(token_of(id));
  return tokens;
}

Vocabulary Vocabulary::truncated(std::size_t max_size) const {
  if (max_size < static_cast<std::size_t>(kReserved) + 1) {
    throw ArgumentError("vocabulary cap must leave room for at least one real token");
  }
  if (size() <= max_size) return *this;
  Vocabulary out;
  for (std::size_t id = kReserved; id < max_size; ++id) out.push_token(id_to_token_[id]);
  return out;
}

std::string Vocabulary::to_text() const {
  std::string text;
  for (const std::string& t : id_to_token_) {
    text += t;
    text += '\n';
  }
  return text;
}

Vocabulary Vocabulary::from_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  Vocabulary vocab;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no <= kReservedTokens.size()) {
      if (line != kReservedTokens[line_no - 1]) {
        throw ParseError("vocabulary line " + std::to_string(line_no) + ": expected reserved token '" +
                         kReservedTokens[line_no - 1] + "', got '" + line + "'");
      }
      continue;
    }
    if (line.empty()) throw ParseError("vocabulary line " + std::to_string(line_no) + ": empty token");
    vocab.push_token(line);
  }
  if (line_no < kReservedTokens.size()) throw ParseError("vocabulary file is missing its reserved-token header");
  if (vocab.size() < 5) throw ParseError("vocabulary must contain at least one real token");
  return vocab;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << to_text();
  if (!out) throw IoError("failed writing " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str());
}

std::vector<RawRecord> load_raw_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());

  std::vector<RawRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("title") || !j.contains("abstract") ||
        !j["title"].is_string() || !j["abstract"].is_string()) {
      throw ParseError(path.string() + " line " + std::to_string(line_no) +
                       ": expected {\"title\": string, \"abstract\": string}");
    }
    RawRecord rec{j["title"].get<std::string>(), j["abstract"].get<std::string>()};
    if (tokenize(rec.title).empty()) {
      throw ParseError(path.string() + " line " + std::to_string(line_no) + ": title has no tokens");
    }
    if (tokenize(rec.abstract).empty()) {
      throw ParseError(path.string() + " line " + std::to_string(line_no) + ": abstract has no tokens");
    }
    records.push_back(std::move(rec));
  }
  if (records.empty()) throw ArgumentError(path.string() + ": corpus is empty");
  return records;
}

Document tokenize_record(const RawRecord& raw) {
  Document doc{tokenize(raw.title), tokenize(raw.abstract)};
  if (doc.abstract.size() > kMaxAbstractTokens) doc.abstract.resize(kMaxAbstractTokens);
  return doc;
}

std::vector<Document> load_corpus(const std::filesystem::path& path) {
  std::vector<Document> docs;
  for (const RawRecord& rec : load_raw_corpus(path)) docs.push_back(tokenize_record(rec));
  return docs;
}

SplitIndices split_indices(std::size_t count, std::uint64_t seed) {
  if (count == 0) throw ArgumentError("split: empty corpus");
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  const std::size_t n_train = count * 8 / 10;
  const std::size_t n_val = count / 10;
  SplitIndices split;
  split.train.assign(order.begin(), order.begin() + n_train);
  split.validation.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  split.test.assign(order.begin() + n_train + n_val, order.end());
  return split;
}

CorpusSplit load_and_split(const std::filesystem::path& path, std::uint64_t seed) {
  const std::vector<Document> docs = load_corpus(path);
  const SplitIndices idx = split_indices(docs.size(), seed);
  CorpusSplit split;
  split.split_seed = seed;
  for (std::size_t i : idx.train) split.train.push_back(docs[i]);
  for (std::size_t i : idx.validation) split.validation.push_back(docs[i]);
  for (std::size_t i : idx.test) split.test.push_back(docs[i]);
  return split;
}

void save_raw_corpus(const std::vector<RawRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const RawRecord& rec : records) {
    nlohmann::json j;
    j["title"] = rec.title;
    j["abstract"] = rec.abstract;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace wenet
