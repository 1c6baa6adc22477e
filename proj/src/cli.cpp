#include "xtra/cli.hpp"

#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "xtra/clustering.hpp"
#include "xtra/corpus.hpp"
#include "xtra/evaluation.hpp"
#include "xtra/io_util.hpp"
#include "xtra/llm_judge.hpp"
#include "xtra/model.hpp"
#include "xtra/objectives.hpp"
#include "xtra/training.hpp"

namespace xtra::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << v;
  return os.str();
}

Lang parse_lang(const std::string& tag) {
  if (tag == "l1") return Lang::L1;
  if (tag == "l2") return Lang::L2;
  throw ValidationError("language must be \"l1\" or \"l2\", got \"" + tag + "\"");
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Expands a flat key=value config file into --key value tokens placed before
// the explicit command-line tokens, so explicit flags win (last value is
// taken). Keys must name options of the chosen subcommand.
std::vector<std::string> expand_config(const CLI::App& app,
                                       const std::vector<std::string>& args) {
  if (args.empty()) return args;
  const CLI::App* sub = app.get_subcommand_no_throw(args[0]);
  if (sub == nullptr) return args;

  std::string config_path;
  std::vector<std::string> rest;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size())
        throw ValidationError("--config expects a file path");
      config_path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (config_path.empty()) return args;

  std::vector<std::string> out = {args[0]};
  for_each_line(config_path, [&](std::size_t lineno, const std::string& raw) {
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') return;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError(config_path + ":" + std::to_string(lineno) +
                            ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    if (key.empty())
      throw ValidationError(config_path + ":" + std::to_string(lineno) +
                            ": empty key");
    if (key == "config" ||
        const_cast<CLI::App*>(sub)->get_option_no_throw("--" + key) == nullptr)
      throw ValidationError(config_path + ":" + std::to_string(lineno) +
                            ": unknown config key \"" + key + "\" for subcommand " +
                            args[0]);
    out.push_back("--" + key);
    out.push_back(value);
  });
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

// config snapshot + input hashes + seed, written beside every command's outputs
void write_manifest(const fs::path& out_dir, const std::string& command,
                    const json& config, const std::vector<fs::path>& inputs,
                    std::uint64_t seed) {
  json doc;
  doc["command"] = command;
  doc["config"] = config;
  json hashed = json::object();
  for (const auto& p : inputs) hashed[p.string()] = hex64(hash_file(p));
  doc["inputs"] = hashed;
  doc["seed"] = seed;
  std::ofstream out = open_out(out_dir / (command + "_manifest.json"));
  out << doc.dump(2) << "\n";
}

Vocabulary load_vocab_checked(const std::string& path, Lang lang,
                              const ModelState& state) {
  if (path.empty())
    throw ValidationError(std::string("missing --vocab-") + lang_tag(lang));
  Vocabulary vocab = load_vocab(path, lang);
  const std::uint64_t expect = state.vocab_hash[static_cast<std::size_t>(lang_index(lang))];
  if (expect != 0 && vocab.hash() != expect)
    throw ValidationError("vocabulary hash mismatch for " + std::string(lang_tag(lang)) +
                          ": checkpoint " + hex64(expect) + " vs file " +
                          hex64(vocab.hash()));
  return vocab;
}

// ---------------------------------------------------------------- preprocess

struct PreprocessOpts {
  std::string corpus;
  std::string out_dir = ".";
  int min_df = 1;
  double max_df_ratio = 1.0;
  double train_ratio = 0.0;  // 0 = no split
  std::uint64_t seed = 1;
};

void run_preprocess(const PreprocessOpts& o) {
  const BilingualCorpus corpus = load_corpus(o.corpus);
  const Vocabulary v1 = build_vocab(corpus, Lang::L1, o.min_df, o.max_df_ratio);
  const Vocabulary v2 = build_vocab(corpus, Lang::L2, o.min_df, o.max_df_ratio);

  fs::create_directories(o.out_dir);
  save_vocab(v1, fs::path(o.out_dir) / "vocab_l1.txt");
  save_vocab(v2, fs::path(o.out_dir) / "vocab_l2.txt");

  for (const Vocabulary* v : {&v1, &v2}) {
    const VectorizeResult r = vectorize(corpus, *v);
    for (const auto& id : r.dropped_ids)
      std::cerr << "note: document \"" << id
                << "\" has no in-vocabulary tokens and will be dropped\n";
  }

  if (o.train_ratio > 0.0) {
    const SplitResult split = split_corpus(corpus, o.train_ratio, o.seed);
    save_corpus(split.train, fs::path(o.out_dir) / "corpus_train.jsonl");
    save_corpus(split.test, fs::path(o.out_dir) / "corpus_test.jsonl");
    std::cout << "split: " << split.train.docs.size() << " train / "
              << split.test.docs.size() << " test documents\n";
  }

  json cfg = {{"min_df", o.min_df},
              {"max_df_ratio", o.max_df_ratio},
              {"train_ratio", o.train_ratio}};
  write_manifest(o.out_dir, "preprocess", cfg, {o.corpus}, o.seed);
  std::cout << "vocab sizes: l1=" << v1.size() << " l2=" << v2.size() << "\n";
}

// ------------------------------------------------------------------- cluster

struct ClusterOpts {
  std::string corpus, emb_vec, emb_manifest;
  std::string out_dir = ".";
  std::string pivot = "l1";
  int clusters = 20;
  int svd_rank = 50;
  double epsilon = 1.0;
  std::uint64_t seed = 1;
};

void run_cluster(const ClusterOpts& o) {
  const BilingualCorpus corpus = load_corpus(o.corpus);
  const EmbeddingTable table = load_embeddings(o.emb_vec, o.emb_manifest);
  const Lang pivot = parse_lang(o.pivot);

  EmbeddingTable sub;
  sub.dim = table.dim;
  std::vector<std::string> pivot_ids, nonpivot_ids, all_ids;
  for (const auto& doc : corpus.docs) {
    sub.insert(doc.id, table.at(doc.id));
    all_ids.push_back(doc.id);
    (doc.lang == pivot ? pivot_ids : nonpivot_ids).push_back(doc.id);
  }

  const ReducedEmbeddings reduced = reduce_and_normalize(sub, o.svd_rank, o.seed);
  ClusterModel model = fit_pivot_clusters(reduced, pivot_ids, o.clusters, o.seed);
  model.pivot_lang = pivot;
  assign_nonpivot(reduced, nonpivot_ids, model);
  const PriorParams prior = compute_prior(model.counts, o.epsilon);

  fs::create_directories(o.out_dir);
  save_assignments(model, all_ids, fs::path(o.out_dir) / "clusters.tsv");
  save_prior(prior, fs::path(o.out_dir) / "prior.json");

  json cfg = {{"pivot", o.pivot},
              {"clusters", o.clusters},
              {"svd_rank", o.svd_rank},
              {"epsilon", o.epsilon}};
  write_manifest(o.out_dir, "cluster", cfg, {o.corpus, o.emb_vec, o.emb_manifest},
                 o.seed);
  std::cout << "cluster sizes:";
  for (auto n : model.counts) std::cout << " " << n;
  std::cout << "\n";
}

// --------------------------------------------------------------------- train

struct TrainOpts {
  std::string corpus, vocab_l1, vocab_l2, emb_vec, emb_manifest, clusters, prior;
  std::string out_dir = ".";
  int topics = 20;
  int hidden = 200;
  int d_sem = 128;
  double lambda1 = 80.0, lambda2 = 5.0, lambda3 = 7.0;
  double dropout = 0.2, temperature = 1.0;
  double lr = 0.002, lr_decay_factor = 0.5;
  int lr_decay_every = 250, epochs = 800, batch_size = 64;
  std::uint64_t seed = 1;
};

void run_train(const TrainOpts& o) {
  const BilingualCorpus corpus = load_corpus(o.corpus);
  const Vocabulary v1 = load_vocab(o.vocab_l1, Lang::L1);
  const Vocabulary v2 = load_vocab(o.vocab_l2, Lang::L2);
  const VectorizeResult r1 = vectorize(corpus, v1);
  const VectorizeResult r2 = vectorize(corpus, v2);
  for (const VectorizeResult* r : {&r1, &r2})
    for (const auto& id : r->dropped_ids)
      std::cerr << "note: dropping \"" << id << "\" (no in-vocabulary tokens)\n";

  const EmbeddingTable table = load_embeddings(o.emb_vec, o.emb_manifest);
  const PriorParams prior = load_prior(o.prior);
  int clusters_in_file = 0;
  ClusterModel cm;
  cm.assignment = load_assignments(o.clusters, &clusters_in_file);
  if (prior.dim() != o.topics)
    throw ValidationError("cluster count T=" + std::to_string(prior.dim()) +
                          " (from the prior) must equal --topics K=" +
                          std::to_string(o.topics));
  if (clusters_in_file > o.topics)
    throw ValidationError("assignments use " + std::to_string(clusters_in_file) +
                          " clusters but --topics is " + std::to_string(o.topics));
  cm.num_clusters = o.topics;

  ModelConfig mc;
  mc.topics = o.topics;
  mc.hidden_dim = o.hidden;
  mc.d_sem = o.d_sem;
  mc.lambda1 = o.lambda1;
  mc.lambda2 = o.lambda2;
  mc.lambda3 = o.lambda3;
  mc.dropout = o.dropout;
  mc.temperature = o.temperature;
  mc.batch_size = o.batch_size;
  mc.seed = o.seed;
  ModelState state =
      init_model(mc, {static_cast<Eigen::Index>(v1.size()), static_cast<Eigen::Index>(v2.size())},
                 static_cast<int>(table.dim), {v1.hash(), v2.hash()});

  TrainConfig tc;
  tc.epochs = o.epochs;
  tc.lr = o.lr;
  tc.lr_decay_factor = o.lr_decay_factor;
  tc.lr_decay_every = o.lr_decay_every;
  tc.batch_size = o.batch_size;
  tc.seed = o.seed;
  tc.lambda1 = o.lambda1;
  tc.lambda2 = o.lambda2;
  tc.lambda3 = o.lambda3;

  TrainData data;
  data.bow[0] = &r1.bow;
  data.bow[1] = &r2.bow;
  data.embeddings = &table;
  data.clusters = &cm;
  data.prior = &prior;

  const TrainLog log = train(state, data, tc);

  fs::create_directories(o.out_dir);
  save_checkpoint(state, fs::path(o.out_dir) / "model.ckpt");
  save_train_log(log, fs::path(o.out_dir) / "train_log.jsonl");

  json cfg = {{"topics", o.topics},       {"hidden", o.hidden},
              {"d_sem", o.d_sem},         {"lambda1", o.lambda1},
              {"lambda2", o.lambda2},     {"lambda3", o.lambda3},
              {"dropout", o.dropout},     {"temperature", o.temperature},
              {"lr", o.lr},               {"lr_decay_factor", o.lr_decay_factor},
              {"lr_decay_every", o.lr_decay_every}, {"epochs", o.epochs},
              {"batch_size", o.batch_size}};
  write_manifest(o.out_dir, "train", cfg,
                 {o.corpus, o.vocab_l1, o.vocab_l2, o.emb_vec, o.emb_manifest,
                  o.clusters, o.prior},
                 o.seed);
  if (!log.epochs.empty())
    std::cout << "final epoch mean loss: " << log.epochs.back().mean_loss.total
              << "\n";
}

// --------------------------------------------------------------------- infer

struct InferOpts {
  std::string checkpoint, corpus, vocab_l1, vocab_l2;
  std::string lang = "both";
  std::string out_dir = ".";
};

void run_infer(const InferOpts& o) {
  const ModelState state = load_checkpoint(o.checkpoint);
  const BilingualCorpus corpus = load_corpus(o.corpus);
  std::vector<Lang> langs;
  if (o.lang == "both") langs = {Lang::L1, Lang::L2};
  else langs = {parse_lang(o.lang)};

  fs::create_directories(o.out_dir);
  for (Lang lang : langs) {
    const Vocabulary vocab = load_vocab_checked(
        lang == Lang::L1 ? o.vocab_l1 : o.vocab_l2, lang, state);
    const VectorizeResult r = vectorize(corpus, vocab);
    const Eigen::MatrixXd theta = infer_theta(state, r.bow);
    std::ofstream out = open_out(fs::path(o.out_dir) /
                                 (std::string("theta_") + lang_tag(lang) + ".tsv"));
    out << std::setprecision(17);
    for (Eigen::Index i = 0; i < theta.rows(); ++i) {
      out << r.bow.doc_ids[static_cast<std::size_t>(i)];
      for (Eigen::Index k = 0; k < theta.cols(); ++k) out << "\t" << theta(i, k);
      out << "\n";
    }
    std::cout << "theta_" << lang_tag(lang) << ".tsv: " << theta.rows()
              << " documents\n";
  }

  json cfg = {{"lang", o.lang}};
  std::vector<fs::path> inputs = {o.checkpoint, o.corpus};
  if (!o.vocab_l1.empty()) inputs.push_back(o.vocab_l1);
  if (!o.vocab_l2.empty()) inputs.push_back(o.vocab_l2);
  write_manifest(o.out_dir, "infer", cfg, inputs, state.config.seed);
}

// ------------------------------------------------------------- export-topics

struct ExportTopicsOpts {
  std::string checkpoint, vocab_l1, vocab_l2;
  std::string out_dir = ".";
  int top = 15;
};

void run_export_topics(const ExportTopicsOpts& o) {
  const ModelState state = load_checkpoint(o.checkpoint);
  const Vocabulary v1 = load_vocab_checked(o.vocab_l1, Lang::L1, state);
  const Vocabulary v2 = load_vocab_checked(o.vocab_l2, Lang::L2, state);

  TopicSet topics;
  topics.topics = state.config.topics;
  topics.top_l = o.top;
  topics.words[0] = top_words(get_beta(state, Lang::L1), v1, o.top);
  topics.words[1] = top_words(get_beta(state, Lang::L2), v2, o.top);

  fs::create_directories(o.out_dir);
  save_topics(topics, fs::path(o.out_dir) / "topics.json");
  json cfg = {{"top", o.top}};
  write_manifest(o.out_dir, "export-topics", cfg,
                 {o.checkpoint, o.vocab_l1, o.vocab_l2}, state.config.seed);
  std::cout << "exported " << topics.topics << " topics x " << o.top
            << " words per language\n";
}

// --------------------------------------------------------------- eval-topics

struct EvalTopicsOpts {
  std::string topics, reference, checkpoint;
  std::string out_dir = ".";
};

void run_eval_topics(const EvalTopicsOpts& o) {
  const TopicSet topics = load_topics(o.topics);
  const ReferencePairs ref = load_reference_pairs(o.reference);
  MetricReport report = evaluate_topics(topics, ref);
  report.reference_hash = hash_file(o.reference);
  if (!o.checkpoint.empty()) report.checkpoint_hash = hash_file(o.checkpoint);

  fs::create_directories(o.out_dir);
  save_metric_report(report, fs::path(o.out_dir) / "metrics.json");
  std::vector<fs::path> inputs = {o.topics, o.reference};
  if (!o.checkpoint.empty()) inputs.push_back(o.checkpoint);
  write_manifest(o.out_dir, "eval-topics", json::object(), inputs, 0);
  std::cout << "cnpmi=" << report.cnpmi << " tu=" << report.tu
            << " tq=" << report.tq << "\n";
}

// ------------------------------------------------------------------ eval-clf

struct EvalClfOpts {
  std::string checkpoint, train_corpus, test_corpus, vocab_l1, vocab_l2;
  std::string train_lang = "l1", test_lang = "l1";
  std::string out_dir = ".";
  std::uint64_t seed = 1;
};

struct LabeledTheta {
  Eigen::MatrixXd theta;
  std::vector<int> labels;
};

LabeledTheta labeled_theta(const ModelState& state, const std::string& corpus_path,
                           const std::string& vocab_path, Lang lang) {
  const BilingualCorpus corpus = load_corpus(corpus_path);
  const Vocabulary vocab = load_vocab_checked(vocab_path, lang, state);
  const VectorizeResult r = vectorize(corpus, vocab);
  LabeledTheta out;
  out.theta = infer_theta(state, r.bow);
  out.labels.reserve(r.bow.doc_ids.size());
  for (const auto& id : r.bow.doc_ids) {
    const Document* doc = corpus.find(id);
    if (!doc->label)
      throw ValidationError("document \"" + id + "\" has no label");
    out.labels.push_back(*doc->label);
  }
  return out;
}

void run_eval_clf(const EvalClfOpts& o) {
  const ModelState state = load_checkpoint(o.checkpoint);
  const Lang train_lang = parse_lang(o.train_lang);
  const Lang test_lang = parse_lang(o.test_lang);
  const ClassifierMode mode =
      train_lang == test_lang ? ClassifierMode::Intra : ClassifierMode::Cross;

  const LabeledTheta train_side = labeled_theta(
      state, o.train_corpus, train_lang == Lang::L1 ? o.vocab_l1 : o.vocab_l2,
      train_lang);
  const LabeledTheta test_side = labeled_theta(
      state, o.test_corpus, test_lang == Lang::L1 ? o.vocab_l1 : o.vocab_l2,
      test_lang);

  const double accuracy =
      eval_classification(train_side.theta, train_side.labels, test_side.theta,
                          test_side.labels, mode, o.seed);

  fs::create_directories(o.out_dir);
  json doc = {{"accuracy", accuracy},
              {"mode", mode == ClassifierMode::Intra ? "intra" : "cross"},
              {"train_lang", o.train_lang},
              {"test_lang", o.test_lang},
              {"train_docs", train_side.labels.size()},
              {"test_docs", test_side.labels.size()}};
  {
    std::ofstream out = open_out(fs::path(o.out_dir) / "classification.json");
    out << doc.dump(2) << "\n";
  }
  json cfg = {{"train_lang", o.train_lang}, {"test_lang", o.test_lang}};
  std::vector<fs::path> inputs = {o.checkpoint, o.train_corpus, o.test_corpus};
  if (!o.vocab_l1.empty()) inputs.push_back(o.vocab_l1);
  if (!o.vocab_l2.empty()) inputs.push_back(o.vocab_l2);
  write_manifest(o.out_dir, "eval-clf", cfg, inputs, o.seed);
  std::cout << "accuracy=" << accuracy << "\n";
}

// ------------------------------------------------------------------ eval-llm

struct EvalLlmOpts {
  std::string topics;
  std::string dataset = "ec-news";
  std::string task = "intra";
  std::string out_dir = ".";
  int repeats = 3;
};

void run_eval_llm(const EvalLlmOpts& o) {
  const TopicSet topics = load_topics(o.topics);
  JudgeTask task;
  if (o.task == "intra") task = JudgeTask::IntraCoherence;
  else if (o.task == "cross") task = JudgeTask::CrossSimilarity;
  else throw ValidationError("--task must be \"intra\" or \"cross\"");

  LlmProvider provider = provider_from_env(parse_judge_dataset(o.dataset));
  provider.repeats = o.repeats;

  fs::create_directories(o.out_dir);
  const fs::path out_path = fs::path(o.out_dir) / "llm_scores.json";
  auto to_json = [](const std::vector<std::optional<double>>& v) {
    json arr = json::array();
    for (const auto& s : v)
      arr.push_back(s ? json(*s) : json(nullptr));
    return arr;
  };

  try {
    const LlmScores scores = llm_rate_topics(topics, task, provider);
    json doc = {{"dataset", o.dataset}, {"task", o.task}, {"repeats", o.repeats}};
    if (task == JudgeTask::IntraCoherence) {
      doc["lang1"] = to_json(scores.lang1);
      doc["lang2"] = to_json(scores.lang2);
    } else {
      doc["cross"] = to_json(scores.cross);
    }
    std::ofstream out = open_out(out_path);
    out << doc.dump(2) << "\n";
    std::cout << "llm scores written to " << out_path.string() << "\n";
  } catch (const ProviderUnreachable& e) {
    // metric skipped, run not failed
    std::cerr << "llm judge skipped: " << e.what() << "\n";
    json doc = {{"skipped", e.what()}};
    std::ofstream out = open_out(out_path);
    out << doc.dump(2) << "\n";
  }
  json cfg = {{"dataset", o.dataset}, {"task", o.task}, {"repeats", o.repeats}};
  write_manifest(o.out_dir, "eval-llm", cfg, {o.topics}, 0);
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"XTRA: cross-lingual topic modeling"};
  app.require_subcommand(1);

  // Repeated options take the last value so config-file values (inserted
  // first) lose to explicit command-line flags.
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  std::string config_path_display;  // bound so --config shows up in help
  auto with_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path_display,
                    "flat key=value config file (command line wins)");
    return sub;
  };

  PreprocessOpts pre;
  auto* sub_pre = with_config(app.add_subcommand("preprocess", "Build vocabularies and optional split"));
  sub_pre->add_option("--corpus", pre.corpus, "bilingual corpus (jsonl)")->required();
  sub_pre->add_option("--out-dir", pre.out_dir, "output directory");
  sub_pre->add_option("--min-df", pre.min_df, "minimum document frequency");
  sub_pre->add_option("--max-df-ratio", pre.max_df_ratio, "maximum df as corpus fraction");
  sub_pre->add_option("--train-ratio", pre.train_ratio, "stratified split ratio (0 = no split)");
  sub_pre->add_option("--seed", pre.seed, "split seed");
  sub_pre->callback([&] { run_preprocess(pre); });

  ClusterOpts clu;
  auto* sub_clu = with_config(app.add_subcommand("cluster", "Cluster document embeddings and derive the prior"));
  sub_clu->add_option("--corpus", clu.corpus, "corpus the clusters are for")->required();
  sub_clu->add_option("--emb-vec", clu.emb_vec, "embedding vectors (binary)")->required();
  sub_clu->add_option("--emb-manifest", clu.emb_manifest, "embedding id manifest")->required();
  sub_clu->add_option("--out-dir", clu.out_dir, "output directory");
  sub_clu->add_option("--pivot", clu.pivot, "pivot language (l1|l2)");
  sub_clu->add_option("--clusters", clu.clusters, "number of clusters T");
  sub_clu->add_option("--svd-rank", clu.svd_rank, "truncated SVD rank");
  sub_clu->add_option("--epsilon", clu.epsilon, "prior smoothing epsilon");
  sub_clu->add_option("--seed", clu.seed, "clustering seed");
  sub_clu->callback([&] { run_cluster(clu); });

  TrainOpts tr;
  auto* sub_tr = with_config(app.add_subcommand("train", "Train the topic model"));
  sub_tr->add_option("--corpus", tr.corpus, "training corpus (jsonl)")->required();
  sub_tr->add_option("--vocab-l1", tr.vocab_l1, "language 1 vocabulary")->required();
  sub_tr->add_option("--vocab-l2", tr.vocab_l2, "language 2 vocabulary")->required();
  sub_tr->add_option("--emb-vec", tr.emb_vec, "embedding vectors")->required();
  sub_tr->add_option("--emb-manifest", tr.emb_manifest, "embedding manifest")->required();
  sub_tr->add_option("--clusters", tr.clusters, "cluster assignments (tsv)")->required();
  sub_tr->add_option("--prior", tr.prior, "prior parameters (json)")->required();
  sub_tr->add_option("--out-dir", tr.out_dir, "output directory");
  sub_tr->add_option("--topics", tr.topics, "number of topics K");
  sub_tr->add_option("--hidden", tr.hidden, "encoder hidden width");
  sub_tr->add_option("--d-sem", tr.d_sem, "semantic projection width");
  sub_tr->add_option("--lambda1", tr.lambda1, "InfoNCE weight");
  sub_tr->add_option("--lambda2", tr.lambda2, "cluster-loss weight");
  sub_tr->add_option("--lambda3", tr.lambda3, "alignment-loss weight");
  sub_tr->add_option("--dropout", tr.dropout, "input-MLP dropout rate");
  sub_tr->add_option("--temperature", tr.temperature, "similarity temperature");
  sub_tr->add_option("--lr", tr.lr, "initial learning rate");
  sub_tr->add_option("--lr-decay-factor", tr.lr_decay_factor, "decay factor");
  sub_tr->add_option("--lr-decay-every", tr.lr_decay_every, "decay period (epochs)");
  sub_tr->add_option("--epochs", tr.epochs, "training epochs");
  sub_tr->add_option("--batch-size", tr.batch_size, "even batch size");
  sub_tr->add_option("--seed", tr.seed, "training seed");
  sub_tr->callback([&] { run_train(tr); });

  InferOpts inf;
  auto* sub_inf = with_config(app.add_subcommand("infer", "Infer document-topic rows"));
  sub_inf->add_option("--checkpoint", inf.checkpoint, "trained model")->required();
  sub_inf->add_option("--corpus", inf.corpus, "corpus to infer")->required();
  sub_inf->add_option("--vocab-l1", inf.vocab_l1, "language 1 vocabulary");
  sub_inf->add_option("--vocab-l2", inf.vocab_l2, "language 2 vocabulary");
  sub_inf->add_option("--lang", inf.lang, "l1, l2, or both");
  sub_inf->add_option("--out-dir", inf.out_dir, "output directory");
  sub_inf->callback([&] { run_infer(inf); });

  ExportTopicsOpts exp;
  auto* sub_exp = with_config(app.add_subcommand("export-topics", "Write per-topic top-word lists"));
  sub_exp->add_option("--checkpoint", exp.checkpoint, "trained model")->required();
  sub_exp->add_option("--vocab-l1", exp.vocab_l1, "language 1 vocabulary")->required();
  sub_exp->add_option("--vocab-l2", exp.vocab_l2, "language 2 vocabulary")->required();
  sub_exp->add_option("--out-dir", exp.out_dir, "output directory");
  sub_exp->add_option("--top", exp.top, "words per topic");
  sub_exp->callback([&] { run_export_topics(exp); });

  EvalTopicsOpts evt;
  auto* sub_evt = with_config(app.add_subcommand("eval-topics", "Score topics with CNPMI/TU/TQ"));
  sub_evt->add_option("--topics", evt.topics, "topics file (json)")->required();
  sub_evt->add_option("--reference", evt.reference, "aligned reference pairs (jsonl)")->required();
  sub_evt->add_option("--checkpoint", evt.checkpoint, "checkpoint for provenance hash");
  sub_evt->add_option("--out-dir", evt.out_dir, "output directory");
  sub_evt->callback([&] { run_eval_topics(evt); });

  EvalClfOpts evc;
  auto* sub_evc = with_config(app.add_subcommand("eval-clf", "SVM classification transfer on theta features"));
  sub_evc->add_option("--checkpoint", evc.checkpoint, "trained model")->required();
  sub_evc->add_option("--train-corpus", evc.train_corpus, "labeled training corpus")->required();
  sub_evc->add_option("--test-corpus", evc.test_corpus, "labeled test corpus")->required();
  sub_evc->add_option("--vocab-l1", evc.vocab_l1, "language 1 vocabulary");
  sub_evc->add_option("--vocab-l2", evc.vocab_l2, "language 2 vocabulary");
  sub_evc->add_option("--train-lang", evc.train_lang, "language of the training side");
  sub_evc->add_option("--test-lang", evc.test_lang, "language of the test side");
  sub_evc->add_option("--out-dir", evc.out_dir, "output directory");
  sub_evc->add_option("--seed", evc.seed, "classifier seed");
  sub_evc->callback([&] { run_eval_clf(evc); });

  EvalLlmOpts evl;
  auto* sub_evl = with_config(app.add_subcommand("eval-llm", "LLM-as-judge topic ratings"));
  sub_evl->add_option("--topics", evl.topics, "topics file (json)")->required();
  sub_evl->add_option("--dataset", evl.dataset, "ec-news, amazon-review, or rakuten-amazon");
  sub_evl->add_option("--task", evl.task, "intra or cross");
  sub_evl->add_option("--repeats", evl.repeats, "assessments per topic");
  sub_evl->add_option("--out-dir", evl.out_dir, "output directory");
  sub_evl->callback([&] { run_eval_llm(evl); });

  try {
    const std::vector<std::string> expanded = expand_config(app, args);
    std::vector<const char*> argv;
    argv.push_back("xtra");
    for (const auto& a : expanded) argv.push_back(a.c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace xtra::cli
