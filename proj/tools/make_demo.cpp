// Generates a small synthetic bilingual dataset (corpus, document embeddings,
// aligned reference pairs) so the pipeline can be exercised end to end without
// external data.
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "xtra/corpus.hpp"
#include "xtra/evaluation.hpp"
#include "xtra/synthetic.hpp"

int main(int argc, char** argv) {
  namespace fs = std::filesystem;
  CLI::App app{"xtra-make-demo: synthetic bilingual dataset generator"};

  xtra::SyntheticSpec spec;
  std::string out_dir = ".";
  app.add_option("--out-dir", out_dir, "output directory");
  app.add_option("--topics", spec.topics, "planted topics");
  app.add_option("--words-per-topic", spec.words_per_topic, "lexicon size per topic");
  app.add_option("--docs-per-lang", spec.docs_per_lang, "documents per language");
  app.add_option("--doc-len", spec.doc_len, "tokens per document");
  app.add_option("--purity", spec.purity, "probability a token comes from the planted topic");
  app.add_option("--embed-dim", spec.embed_dim, "embedding dimensionality");
  app.add_option("--embed-noise", spec.embed_noise, "embedding noise scale");
  app.add_option("--seed", spec.seed, "generator seed");

  try {
    app.parse(argc, argv);
    const xtra::SyntheticData data = xtra::make_synthetic(spec);
    fs::create_directories(out_dir);
    xtra::save_corpus(data.corpus, fs::path(out_dir) / "corpus.jsonl");
    xtra::save_embeddings(data.embeddings, fs::path(out_dir) / "embeddings.bin",
                          fs::path(out_dir) / "embeddings_ids.jsonl");
    xtra::save_reference_pairs(data.reference, fs::path(out_dir) / "reference.jsonl");
    std::cout << "wrote corpus.jsonl, embeddings.bin, embeddings_ids.jsonl, "
                 "reference.jsonl to "
              << out_dir << "\n";
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
