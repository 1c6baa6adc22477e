#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "xtra/common.hpp"

namespace xtra {

struct Document {
  std::string id;
  Lang lang = Lang::L1;
  std::vector<std::string> tokens;
  std::optional<int> label;
};

// Documents in file order, both languages interleaved as they appeared.
struct BilingualCorpus {
  std::vector<Document> docs;

  std::size_t count(Lang lang) const;
  std::vector<std::size_t> indices(Lang lang) const;
  const Document* find(const std::string& id) const;
};

struct Vocabulary {
  Lang lang = Lang::L1;
  std::vector<std::string> tokens;             // sorted, unique
  std::unordered_map<std::string, int> index;  // token -> position in tokens

  std::size_t size() const { return tokens.size(); }
  // Order-sensitive content hash; binds BoW matrices and checkpoints
  // to the vocabulary they were built from.
  std::uint64_t hash() const;
};

struct BowMatrix {
  Lang lang = Lang::L1;
  std::vector<std::string> doc_ids;  // row order
  Eigen::MatrixXd counts;            // num_docs x |V|, whole non-negative values
  std::uint64_t vocab_hash = 0;
};

struct VectorizeResult {
  BowMatrix bow;
  std::vector<std::string> dropped_ids;  // docs with no in-vocabulary tokens
};

struct EmbeddingTable {
  Eigen::Index dim = 0;
  std::vector<std::string> ids;  // row order as stored
  std::unordered_map<std::string, Eigen::VectorXd> rows;

  const Eigen::VectorXd& at(const std::string& id) const;
  bool contains(const std::string& id) const { return rows.count(id) != 0; }
  void insert(const std::string& id, Eigen::VectorXd v);
};

// Line-delimited records: {"id": str, "lang": "l1"|"l2", "tokens": [str...],
// "label": int|null}. Unknown fields ignored.
BilingualCorpus load_corpus(const std::filesystem::path& path);
void save_corpus(const BilingualCorpus& corpus, const std::filesystem::path& path);

// Keeps tokens with min_df <= df <= max_df_ratio * (docs in lang), sorted
// lexicographically.
Vocabulary build_vocab(const BilingualCorpus& corpus, Lang lang, int min_df,
                       double max_df_ratio);

Vocabulary load_vocab(const std::filesystem::path& path, Lang lang);
void save_vocab(const Vocabulary& vocab, const std::filesystem::path& path);

// Documents that hit zero in-vocabulary tokens are dropped and reported.
VectorizeResult vectorize(const BilingualCorpus& corpus, const Vocabulary& vocab);

// Binary embedding container: "XEMB", u32 version=1, u32 D, u32 M, then
// D*M float32 little-endian row-major. Manifest: one {"id": str} per line,
// row i <-> manifest line i.
EmbeddingTable load_embeddings(const std::filesystem::path& vec_path,
                               const std::filesystem::path& manifest_path);
void save_embeddings(const EmbeddingTable& table,
                     const std::filesystem::path& vec_path,
                     const std::filesystem::path& manifest_path);

struct SplitResult {
  BilingualCorpus train;
  BilingualCorpus test;
};

// Stratified per language (and per label where labels exist); deterministic
// given seed.
SplitResult split_corpus(const BilingualCorpus& corpus, double train_ratio,
                         std::uint64_t seed);

}  // namespace xtra
