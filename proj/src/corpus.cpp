#include "xtra/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <set>
#include <unordered_set>

#include <json.hpp>

#include "xtra/io_util.hpp"

namespace xtra {

using nlohmann::json;

std::size_t BilingualCorpus::count(Lang lang) const {
  std::size_t n = 0;
  for (const auto& d : docs) n += (d.lang == lang);
  return n;
}

std::vector<std::size_t> BilingualCorpus::indices(Lang lang) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < docs.size(); ++i)
    if (docs[i].lang == lang) out.push_back(i);
  return out;
}

const Document* BilingualCorpus::find(const std::string& id) const {
  for (const auto& d : docs)
    if (d.id == id) return &d;
  return nullptr;
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& t : tokens) {
    h = fnv1a64(t.data(), t.size(), h);
    h = fnv1a64("\n", 1, h);
  }
  return h;
}

BilingualCorpus load_corpus(const std::filesystem::path& path) {
  BilingualCorpus corpus;
  std::unordered_set<std::string> seen_ids;
  for_each_line(path, [&](std::size_t lineno, const std::string& line) {
    if (line.empty()) return;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                            ": malformed record: " + e.what());
    }
    auto fail = [&](const std::string& msg) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + msg);
    };
    if (!rec.is_object()) fail("record is not an object");
    if (!rec.contains("id") || !rec["id"].is_string()) fail("missing string \"id\"");
    if (!rec.contains("lang") || !rec["lang"].is_string()) fail("missing string \"lang\"");
    if (!rec.contains("tokens") || !rec["tokens"].is_array()) fail("missing array \"tokens\"");

    Document doc;
    doc.id = rec["id"].get<std::string>();
    if (doc.id.empty()) fail("empty id");
    if (!seen_ids.insert(doc.id).second) fail("duplicate id \"" + doc.id + "\"");

    const std::string tag = rec["lang"].get<std::string>();
    if (tag == "l1") doc.lang = Lang::L1;
    else if (tag == "l2") doc.lang = Lang::L2;
    else fail("unknown lang tag \"" + tag + "\"");

    for (const auto& t : rec["tokens"]) {
      if (!t.is_string()) fail("non-string token");
      doc.tokens.push_back(t.get<std::string>());
    }
    if (doc.tokens.empty()) fail("empty \"tokens\"");

    if (rec.contains("label") && !rec["label"].is_null()) {
      if (!rec["label"].is_number_integer()) fail("non-integer label");
      doc.label = rec["label"].get<int>();
    }
    corpus.docs.push_back(std::move(doc));
  });
  return corpus;
}

void save_corpus(const BilingualCorpus& corpus, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  for (const auto& d : corpus.docs) {
    json rec;
    rec["id"] = d.id;
    rec["lang"] = lang_tag(d.lang);
    rec["tokens"] = d.tokens;
    if (d.label) rec["label"] = *d.label;
    else rec["label"] = nullptr;
    out << rec.dump() << "\n";
  }
}

Vocabulary build_vocab(const BilingualCorpus& corpus, Lang lang, int min_df,
                       double max_df_ratio) {
  if (min_df < 1) throw ValidationError("min_df must be >= 1");
  if (!(max_df_ratio > 0.0 && max_df_ratio <= 1.0))
    throw ValidationError("max_df_ratio must be in (0, 1]");

  std::size_t num_docs = corpus.count(lang);
  if (num_docs == 0)
    throw ValidationError(std::string("no documents in language ") + lang_tag(lang));

  // document frequency, not term frequency
  std::map<std::string, std::size_t> df;
  for (const auto& d : corpus.docs) {
    if (d.lang != lang) continue;
    std::set<std::string> uniq(d.tokens.begin(), d.tokens.end());
    for (const auto& t : uniq) ++df[t];
  }

  const double max_df = max_df_ratio * static_cast<double>(num_docs);
  Vocabulary vocab;
  vocab.lang = lang;
  for (const auto& [token, count] : df) {
    if (static_cast<std::size_t>(min_df) <= count &&
        static_cast<double>(count) <= max_df)
      vocab.tokens.push_back(token);  // std::map keeps lexicographic order
  }
  if (vocab.tokens.size() < 2)
    throw ValidationError("vocabulary for " + std::string(lang_tag(lang)) +
                          " has fewer than 2 tokens; loosen min_df/max_df_ratio");
  for (std::size_t i = 0; i < vocab.tokens.size(); ++i)
    vocab.index[vocab.tokens[i]] = static_cast<int>(i);
  return vocab;
}

Vocabulary load_vocab(const std::filesystem::path& path, Lang lang) {
  Vocabulary vocab;
  vocab.lang = lang;
  for_each_line(path, [&](std::size_t lineno, const std::string& line) {
    if (line.empty())
      throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                            ": empty token line");
    if (!vocab.index.emplace(line, static_cast<int>(vocab.tokens.size())).second)
      throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                            ": duplicate token \"" + line + "\"");
    vocab.tokens.push_back(line);
  });
  if (vocab.tokens.size() < 2)
    throw ValidationError("vocabulary file " + path.string() + " has fewer than 2 tokens");
  return vocab;
}

void save_vocab(const Vocabulary& vocab, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  for (const auto& t : vocab.tokens) out << t << "\n";
}

VectorizeResult vectorize(const BilingualCorpus& corpus, const Vocabulary& vocab) {
  VectorizeResult result;
  result.bow.lang = vocab.lang;
  result.bow.vocab_hash = vocab.hash();

  std::vector<Eigen::VectorXd> rows;
  for (const auto& d : corpus.docs) {
    if (d.lang != vocab.lang) continue;
    Eigen::VectorXd row = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(vocab.size()));
    for (const auto& t : d.tokens) {
      auto it = vocab.index.find(t);
      if (it != vocab.index.end()) row[it->second] += 1.0;
    }
    if (row.sum() <= 0.0) {
      result.dropped_ids.push_back(d.id);
      continue;
    }
    result.bow.doc_ids.push_back(d.id);
    rows.push_back(std::move(row));
  }
  if (rows.empty())
    throw ValidationError("every document vectorized to zero; vocabulary does not cover the corpus");

  result.bow.counts.resize(static_cast<Eigen::Index>(rows.size()),
                           static_cast<Eigen::Index>(vocab.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    result.bow.counts.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  return result;
}

const Eigen::VectorXd& EmbeddingTable::at(const std::string& id) const {
  auto it = rows.find(id);
  if (it == rows.end())
    throw ValidationError("no embedding for document \"" + id + "\"");
  return it->second;
}

void EmbeddingTable::insert(const std::string& id, Eigen::VectorXd v) {
  if (dim == 0) dim = v.size();
  if (v.size() != dim)
    throw ValidationError("embedding dim mismatch for \"" + id + "\"");
  if (!rows.emplace(id, std::move(v)).second)
    throw ValidationError("duplicate embedding id \"" + id + "\"");
  ids.push_back(id);
}

namespace {
constexpr char kEmbMagic[4] = {'X', 'E', 'M', 'B'};
constexpr std::uint32_t kEmbVersion = 1;
}  // namespace

EmbeddingTable load_embeddings(const std::filesystem::path& vec_path,
                               const std::filesystem::path& manifest_path) {
  std::ifstream in = open_in(vec_path, /*binary=*/true);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kEmbMagic, 4) != 0)
    throw ValidationError(vec_path.string() + ": bad magic, not an embedding file");
  const std::uint32_t version = read_u32(in, "version");
  if (version != kEmbVersion)
    throw ValidationError(vec_path.string() + ": unsupported version " +
                          std::to_string(version));
  const std::uint32_t num_rows = read_u32(in, "row count");
  const std::uint32_t dim = read_u32(in, "dim");
  if (dim == 0) throw ValidationError(vec_path.string() + ": zero embedding dim");

  std::vector<std::string> manifest_ids;
  for_each_line(manifest_path, [&](std::size_t lineno, const std::string& line) {
    if (line.empty()) return;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw ValidationError(manifest_path.string() + ":" + std::to_string(lineno) +
                            ": malformed record: " + e.what());
    }
    if (!rec.is_object() || !rec.contains("id") || !rec["id"].is_string())
      throw ValidationError(manifest_path.string() + ":" + std::to_string(lineno) +
                            ": expected {\"id\": string}");
    manifest_ids.push_back(rec["id"].get<std::string>());
  });
  if (manifest_ids.size() != num_rows)
    throw ValidationError("manifest has " + std::to_string(manifest_ids.size()) +
                          " ids but header declares " + std::to_string(num_rows) +
                          " rows");

  EmbeddingTable table;
  table.dim = dim;
  for (std::uint32_t r = 0; r < num_rows; ++r) {
    Eigen::VectorXd v(dim);
    for (std::uint32_t c = 0; c < dim; ++c) {
      const float x = read_f32(in, "embedding payload");
      if (!std::isfinite(x))
        throw ValidationError(vec_path.string() + ": non-finite value in row " +
                              std::to_string(r));
      v[c] = static_cast<double>(x);
    }
    table.insert(manifest_ids[r], std::move(v));
  }
  // anything left over means the header undercounted
  char extra;
  if (in.read(&extra, 1); in.gcount() != 0)
    throw ValidationError(vec_path.string() + ": trailing bytes after declared payload");
  return table;
}

void save_embeddings(const EmbeddingTable& table,
                     const std::filesystem::path& vec_path,
                     const std::filesystem::path& manifest_path) {
  std::ofstream out = open_out(vec_path, /*binary=*/true);
  out.write(kEmbMagic, 4);
  write_u32(out, kEmbVersion);
  write_u32(out, static_cast<std::uint32_t>(table.ids.size()));
  write_u32(out, static_cast<std::uint32_t>(table.dim));
  for (const auto& id : table.ids) {
    const Eigen::VectorXd& v = table.rows.at(id);
    for (Eigen::Index c = 0; c < v.size(); ++c)
      write_f32(out, static_cast<float>(v[c]));
  }
  std::ofstream mout = open_out(manifest_path);
  for (const auto& id : table.ids) {
    json rec;
    rec["id"] = id;
    mout << rec.dump() << "\n";
  }
}

SplitResult split_corpus(const BilingualCorpus& corpus, double train_ratio,
                         std::uint64_t seed) {
  if (!(train_ratio > 0.0 && train_ratio < 1.0))
    throw ValidationError("train_ratio must be in (0, 1)");
  for (Lang lang : {Lang::L1, Lang::L2})
    if (corpus.count(lang) < 2)
      throw ValidationError(std::string("language ") + lang_tag(lang) +
                            " needs at least 2 documents to split");

  // strata: (lang, label); unlabeled documents form their own stratum per lang
  std::map<std::pair<int, long long>, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < corpus.docs.size(); ++i) {
    const Document& d = corpus.docs[i];
    const long long key = d.label ? static_cast<long long>(*d.label)
                                  : std::numeric_limits<long long>::min();
    strata[{lang_index(d.lang), key}].push_back(i);
  }

  std::vector<char> goes_to_train(corpus.docs.size(), 0);
  for (auto& [key, members] : strata) {
    if (members.size() < 2)
      throw ValidationError("cannot stratify: a label class in " +
                            std::string(lang_tag(static_cast<Lang>(key.first))) +
                            " has a single document");
    auto rng = rng_for(seed, static_cast<std::uint64_t>(key.first),
                       static_cast<std::uint64_t>(key.second));
    shuffle_det(members, rng);
    auto take = static_cast<std::size_t>(
        std::llround(train_ratio * static_cast<double>(members.size())));
    take = std::clamp<std::size_t>(take, 1, members.size() - 1);
    for (std::size_t j = 0; j < take; ++j) goes_to_train[members[j]] = 1;
  }

  SplitResult result;
  for (std::size_t i = 0; i < corpus.docs.size(); ++i) {
    if (goes_to_train[i]) result.train.docs.push_back(corpus.docs[i]);
    else result.test.docs.push_back(corpus.docs[i]);
  }
  return result;
}

}  // namespace xtra
