#include "xtra/synthetic.hpp"

namespace xtra {

SyntheticData make_synthetic(const SyntheticSpec& spec) {
  if (spec.topics < 2) throw ValidationError("synthetic corpus needs >= 2 topics");
  if (spec.words_per_topic < 1) throw ValidationError("words_per_topic must be >= 1");
  if (spec.docs_per_lang < spec.topics)
    throw ValidationError("docs_per_lang must be >= topics");
  if (spec.doc_len < 1) throw ValidationError("doc_len must be >= 1");
  if (!(spec.purity > 0.0 && spec.purity <= 1.0))
    throw ValidationError("purity must be in (0, 1]");
  if (spec.embed_dim < spec.topics)
    throw ValidationError("embed_dim must be >= topics for the indicator embedding");
  if (!(spec.embed_noise >= 0.0)) throw ValidationError("embed_noise must be >= 0");

  SyntheticData data;
  data.embeddings.dim = spec.embed_dim;

  for (int l = 0; l < 2; ++l) {
    data.lexicon[l].resize(static_cast<std::size_t>(spec.topics));
    const std::string prefix = l == 0 ? "en" : "xx";
    for (int t = 0; t < spec.topics; ++t)
      for (int w = 0; w < spec.words_per_topic; ++w)
        data.lexicon[l][static_cast<std::size_t>(t)].push_back(
            prefix + "_t" + std::to_string(t) + "_w" + std::to_string(w));
  }

  for (int i = 0; i < spec.docs_per_lang; ++i)
    data.planted_topic.push_back(i % spec.topics);  // balanced by construction

  std::array<std::vector<std::vector<std::string>>, 2> doc_tokens;
  for (int l = 0; l < 2; ++l) {
    doc_tokens[l].resize(static_cast<std::size_t>(spec.docs_per_lang));
    for (int i = 0; i < spec.docs_per_lang; ++i) {
      const int topic = data.planted_topic[static_cast<std::size_t>(i)];
      auto rng = rng_for(spec.seed, 1, static_cast<std::uint64_t>(i),
                         static_cast<std::uint64_t>(l));
      auto& tokens = doc_tokens[l][static_cast<std::size_t>(i)];
      for (int w = 0; w < spec.doc_len; ++w) {
        int src = topic;
        if (uniform01(rng) >= spec.purity && spec.topics > 1) {
          // off-topic token from a uniformly chosen other topic
          src = static_cast<int>(rng() % static_cast<std::uint64_t>(spec.topics - 1));
          if (src >= topic) ++src;
        }
        const auto& lex = data.lexicon[l][static_cast<std::size_t>(src)];
        tokens.push_back(lex[static_cast<std::size_t>(
            rng() % static_cast<std::uint64_t>(lex.size()))]);
      }
    }
  }

  for (int l = 0; l < 2; ++l) {
    for (int i = 0; i < spec.docs_per_lang; ++i) {
      Document doc;
      doc.id = "p" + std::to_string(i) + "_" + lang_tag(static_cast<Lang>(l));
      doc.lang = static_cast<Lang>(l);
      doc.tokens = doc_tokens[l][static_cast<std::size_t>(i)];
      doc.label = data.planted_topic[static_cast<std::size_t>(i)];
      data.corpus.docs.push_back(std::move(doc));

      auto rng = rng_for(spec.seed, 2, static_cast<std::uint64_t>(i),
                         static_cast<std::uint64_t>(l));
      Eigen::VectorXd e = Eigen::VectorXd::Zero(spec.embed_dim);
      e[data.planted_topic[static_cast<std::size_t>(i)]] = 1.0;
      for (int d = 0; d < spec.embed_dim; ++d)
        e[d] += spec.embed_noise * std_normal(rng);
      data.embeddings.insert("p" + std::to_string(i) + "_" +
                                 lang_tag(static_cast<Lang>(l)),
                             std::move(e));
    }
  }

  data.reference.l1_tokens = doc_tokens[0];
  data.reference.l2_tokens = doc_tokens[1];
  return data;
}

}  // namespace xtra
