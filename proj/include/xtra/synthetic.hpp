#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xtra/corpus.hpp"
#include "xtra/evaluation.hpp"

namespace xtra {

// Synthetic bilingual corpus with planted topics. Each document pair (one
// per language, same index) shares a topic; tokens are drawn from disjoint
// per-topic lexicons with a purity knob, and embeddings are noisy one-hot
// topic indicators. Used by the test suites and for demo data.
struct SyntheticSpec {
  int topics = 5;
  int words_per_topic = 40;
  int docs_per_lang = 1000;
  int doc_len = 40;
  double purity = 0.9;        // probability a token comes from the doc's topic
  int embed_dim = 32;
  double embed_noise = 0.4;   // stddev of the Gaussian noise on the indicator
  std::uint64_t seed = 7;
};

struct SyntheticData {
  BilingualCorpus corpus;
  EmbeddingTable embeddings;
  ReferencePairs reference;           // the aligned pairs themselves
  std::vector<int> planted_topic;     // per pair index
  std::array<std::vector<std::vector<std::string>>, 2> lexicon;  // [lang][topic]
};

SyntheticData make_synthetic(const SyntheticSpec& spec);

}  // namespace xtra
