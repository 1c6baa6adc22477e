#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "test_util.hpp"
#include "xtra/evaluation.hpp"

using namespace xtra;

namespace {

TopicSet make_topics(int top_l, std::vector<std::vector<std::string>> l1,
                     std::vector<std::vector<std::string>> l2) {
  TopicSet ts;
  ts.topics = static_cast<int>(l1.size());
  ts.top_l = top_l;
  ts.words[0] = std::move(l1);
  ts.words[1] = std::move(l2);
  return ts;
}

// O(K^2 L^2) literal transcription of the uniqueness definition.
double oracle_tu(const TopicSet& ts, Lang lang) {
  const auto& lists = ts.words[static_cast<std::size_t>(lang_index(lang))];
  double total = 0.0;
  for (const auto& list : lists) {
    double acc = 0.0;
    for (const auto& w : list) {
      int cnt = 0;
      for (const auto& other : lists)
        if (std::find(other.begin(), other.end(), w) != other.end()) ++cnt;
      acc += 1.0 / static_cast<double>(cnt);
    }
    total += acc / static_cast<double>(list.size());
  }
  return total / static_cast<double>(lists.size());
}

// Naive per-pair document counting, no shared code with the bitmask version.
double oracle_cnpmi(const TopicSet& ts, const ReferencePairs& ref) {
  auto contains = [](const std::vector<std::string>& doc, const std::string& w) {
    return std::find(doc.begin(), doc.end(), w) != doc.end();
  };
  const double n = static_cast<double>(ref.size());
  double sum = 0.0;
  for (int k = 0; k < ts.topics; ++k) {
    double topic_sum = 0.0;
    int pairs = 0;
    for (const auto& w1 : ts.words[0][static_cast<std::size_t>(k)])
      for (const auto& w2 : ts.words[1][static_cast<std::size_t>(k)]) {
        int c1 = 0, c2 = 0, c12 = 0;
        for (std::size_t d = 0; d < ref.size(); ++d) {
          const bool in1 = contains(ref.l1_tokens[d], w1);
          const bool in2 = contains(ref.l2_tokens[d], w2);
          c1 += in1;
          c2 += in2;
          c12 += in1 && in2;
        }
        const double p1 = c1 / n, p2 = c2 / n, p12 = c12 / n;
        double npmi;
        if (p12 <= 0.0)
          npmi = -1.0;
        else if (p12 >= 1.0)
          npmi = 1.0;
        else
          npmi = std::log(p12 / (p1 * p2)) / (-std::log(p12));
        topic_sum += npmi;
        ++pairs;
      }
    sum += topic_sum / static_cast<double>(pairs);
  }
  return sum / static_cast<double>(ts.topics);
}

std::vector<std::string> lang_vocab(char prefix, int size) {
  std::vector<std::string> v;
  for (int i = 0; i < size; ++i) v.push_back(std::string(1, prefix) + std::to_string(i));
  return v;
}

// L distinct words per topic, sampled by prefix shuffle.
std::vector<std::vector<std::string>> random_lists(std::mt19937_64& rng,
                                                   const std::vector<std::string>& vocab,
                                                   int k, int top_l) {
  std::vector<std::vector<std::string>> lists;
  for (int t = 0; t < k; ++t) {
    std::vector<std::string> pool = vocab;
    shuffle_det(pool, rng);
    lists.emplace_back(pool.begin(), pool.begin() + top_l);
  }
  return lists;
}

}  // namespace

TEST_CASE("topic uniqueness hand cases") {
  SUBCASE("fully distinct lists score 1") {
    const TopicSet ts = make_topics(2, {{"a", "b"}, {"c", "d"}},
                                    {{"p", "q"}, {"r", "s"}});
    CHECK(compute_tu(ts, Lang::L1) == doctest::Approx(1.0));
    CHECK(compute_tu(ts, Lang::L2) == doctest::Approx(1.0));
  }
  SUBCASE("identical lists score 1/K") {
    const TopicSet ts = make_topics(2, {{"a", "b"}, {"a", "b"}, {"a", "b"}},
                                    {{"p", "q"}, {"p", "q"}, {"p", "q"}});
    CHECK(compute_tu(ts, Lang::L1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
  SUBCASE("one shared word") {
    // "a" appears in both topics: per-topic TU = (1/2 + 1) / 2 = 0.75
    const TopicSet ts = make_topics(2, {{"a", "b"}, {"a", "c"}},
                                    {{"p", "q"}, {"r", "s"}});
    CHECK(compute_tu(ts, Lang::L1) == doctest::Approx(0.75).epsilon(1e-12));
    const auto per = tu_per_topic(ts, Lang::L1);
    REQUIRE(per.size() == 2);
    CHECK(per[0] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(per[1] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(compute_tu(ts, Lang::L2) == doctest::Approx(1.0));
  }
  SUBCASE("validation") {
    TopicSet ts = make_topics(2, {{"a", "b"}}, {{"p", "q"}, {"r", "s"}});
    CHECK_THROWS_AS(ts.validate(), ValidationError);
    ts = make_topics(2, {{"a"}}, {{"p", "q"}});
    CHECK_THROWS_AS(compute_tu(ts, Lang::L1), ValidationError);
  }
}

TEST_CASE("topic uniqueness agrees with the brute-force oracle") {
  auto rng = rng_for(7001);
  const auto v1 = lang_vocab('a', 10);
  const auto v2 = lang_vocab('b', 9);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 2 + static_cast<int>(rng() % 5);
    const int top_l = 1 + static_cast<int>(rng() % 5);
    const TopicSet ts = make_topics(top_l, random_lists(rng, v1, k, top_l),
                                    random_lists(rng, v2, k, top_l));
    CAPTURE(trial);
    CHECK(compute_tu(ts, Lang::L1) == doctest::Approx(oracle_tu(ts, Lang::L1)).epsilon(1e-12));
    CHECK(compute_tu(ts, Lang::L2) == doctest::Approx(oracle_tu(ts, Lang::L2)).epsilon(1e-12));
  }
}

TEST_CASE("cross-lingual NPMI hand cases") {
  ReferencePairs ref;
  ref.l1_tokens = {{"e1"}, {"e1"}, {"e2"}, {"e2", "e1"}};
  ref.l2_tokens = {{"f1"}, {"f2"}, {"f1"}, {"f2"}};

  SUBCASE("plain partial co-occurrence") {
    // p(e1) = 3/4, p(f1) = 1/2, joint = 1/4
    const TopicSet ts = make_topics(1, {{"e1"}}, {{"f1"}});
    const double expected = std::log((1.0 / 4.0) / (3.0 / 4.0 * 1.0 / 2.0)) /
                            (-std::log(1.0 / 4.0));
    CHECK(compute_cnpmi(ts, ref) == doctest::Approx(expected).epsilon(1e-12));
  }
  SUBCASE("never co-occurring pair scores -1") {
    ReferencePairs tiny;
    tiny.l1_tokens = {{"a"}, {"b"}};
    tiny.l2_tokens = {{"x"}, {"y"}};
    CHECK(compute_cnpmi(make_topics(1, {{"a"}}, {{"y"}}), tiny) ==
          doctest::Approx(-1.0));
  }
  SUBCASE("perfectly coupled pair scores 1") {
    ReferencePairs tiny;
    tiny.l1_tokens = {{"a"}, {"b"}};
    tiny.l2_tokens = {{"x"}, {"y"}};
    CHECK(compute_cnpmi(make_topics(1, {{"a"}}, {{"x"}}), tiny) ==
          doctest::Approx(1.0));
  }
  SUBCASE("pair present in every document scores 1") {
    ReferencePairs tiny;
    tiny.l1_tokens = {{"a", "c"}, {"a"}};
    tiny.l2_tokens = {{"x"}, {"x", "z"}};
    CHECK(compute_cnpmi(make_topics(1, {{"a"}}, {{"x"}}), tiny) ==
          doctest::Approx(1.0));
  }
  SUBCASE("token repetition inside a document does not double-count") {
    ReferencePairs dup;
    dup.l1_tokens = {{"a", "a", "a"}, {"b"}};
    dup.l2_tokens = {{"x"}, {"x"}};
    // p(a) = 1/2 despite three occurrences; p(x) = 1, joint = 1/2
    const double expected = std::log((1.0 / 2.0) / (1.0 / 2.0)) / (-std::log(0.5));
    CHECK(compute_cnpmi(make_topics(1, {{"a"}}, {{"x"}}), dup) ==
          doctest::Approx(expected).epsilon(1e-12));
  }
  SUBCASE("per-topic output") {
    const TopicSet ts = make_topics(1, {{"e1"}, {"e2"}}, {{"f1"}, {"f2"}});
    std::vector<double> per;
    const double mean = compute_cnpmi(ts, ref, &per);
    REQUIRE(per.size() == 2);
    CHECK(mean == doctest::Approx(0.5 * (per[0] + per[1])).epsilon(1e-12));
  }
  SUBCASE("empty reference is rejected") {
    CHECK_THROWS_AS(compute_cnpmi(make_topics(1, {{"a"}}, {{"x"}}), ReferencePairs{}),
                    ValidationError);
  }
}

TEST_CASE("cross-lingual NPMI agrees with naive pair counting") {
  auto rng = rng_for(7002);
  const auto v1 = lang_vocab('a', 12);
  const auto v2 = lang_vocab('b', 11);
  for (int trial = 0; trial < 100; ++trial) {
    CAPTURE(trial);
    ReferencePairs ref;
    const int docs = 1 + static_cast<int>(rng() % 20);
    for (int d = 0; d < docs; ++d) {
      auto draw = [&](const std::vector<std::string>& vocab) {
        std::vector<std::string> toks;
        const int len = 1 + static_cast<int>(rng() % 5);
        for (int t = 0; t < len; ++t)
          toks.push_back(vocab[static_cast<std::size_t>(rng() % vocab.size())]);
        return toks;
      };
      ref.l1_tokens.push_back(draw(v1));
      ref.l2_tokens.push_back(draw(v2));
    }
    const int k = 1 + static_cast<int>(rng() % 3);
    const int top_l = 1 + static_cast<int>(rng() % 4);
    const TopicSet ts = make_topics(top_l, random_lists(rng, v1, k, top_l),
                                    random_lists(rng, v2, k, top_l));
    CHECK(compute_cnpmi(ts, ref) == doctest::Approx(oracle_cnpmi(ts, ref)).epsilon(1e-9));
  }
}

TEST_CASE("topic quality composition") {
  CHECK(compute_tq(0.05, 0.8) == doctest::Approx(0.04).epsilon(1e-12));
  CHECK(compute_tq(-0.3, 0.9) == doctest::Approx(0.0));
  CHECK(compute_tq(0.0, 0.5) == doctest::Approx(0.0));
  CHECK_THROWS_AS(compute_tq(0.3, 1.2), ValidationError);
  CHECK_THROWS_AS(compute_tq(0.3, -0.1), ValidationError);
}

TEST_CASE("evaluate_topics assembles the full report") {
  ReferencePairs ref;
  ref.l1_tokens = {{"a", "b"}, {"a"}, {"c"}};
  ref.l2_tokens = {{"x"}, {"x", "y"}, {"z"}};
  const TopicSet ts = make_topics(2, {{"a", "b"}, {"c", "a"}},
                                  {{"x", "y"}, {"z", "y"}});
  const MetricReport report = evaluate_topics(ts, ref);

  CHECK(report.tu_l1 == doctest::Approx(compute_tu(ts, Lang::L1)).epsilon(1e-12));
  CHECK(report.tu_l2 == doctest::Approx(compute_tu(ts, Lang::L2)).epsilon(1e-12));
  CHECK(report.tu == doctest::Approx(0.5 * (report.tu_l1 + report.tu_l2)).epsilon(1e-12));
  CHECK(report.cnpmi == doctest::Approx(oracle_cnpmi(ts, ref)).epsilon(1e-9));
  CHECK(report.tq == doctest::Approx(compute_tq(report.cnpmi, report.tu)).epsilon(1e-12));
  CHECK(report.cnpmi_per_topic.size() == 2);
  CHECK(report.tu_per_topic[0].size() == 2);
  CHECK(report.tu_per_topic[1].size() == 2);
}

TEST_CASE("theta inference") {
  ModelConfig mc;
  mc.topics = 3;
  mc.hidden_dim = 4;
  mc.d_sem = 3;
  mc.seed = 77;
  const ModelState state = init_model(mc, {5, 4}, 2, {4242, 0});

  BowMatrix bows;
  bows.lang = Lang::L1;
  bows.doc_ids = {"d0", "d1"};
  bows.counts.resize(2, 5);
  bows.counts << 1, 0, 2, 0, 1, 0, 3, 0, 1, 0;
  bows.vocab_hash = 4242;

  const Eigen::MatrixXd theta = infer_theta(state, bows);
  REQUIRE(theta.rows() == 2);
  REQUIRE(theta.cols() == 3);
  for (Eigen::Index i = 0; i < 2; ++i) {
    CHECK(theta.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(theta.row(i).minCoeff() > 0.0);
    const EncoderOutput out =
        encode(state, bows.counts.row(i).transpose(), Lang::L1, false);
    CHECK((theta.row(i).transpose().array() == out.theta.array()).all());
  }

  SUBCASE("vocabulary hash mismatch names both hashes") {
    BowMatrix other = bows;
    other.vocab_hash = 17;
    CHECK_THROWS_WITH_AS(infer_theta(state, other),
                         doctest::Contains("vocabulary hash mismatch"),
                         ValidationError);
  }
  SUBCASE("width mismatch") {
    BowMatrix other = bows;
    other.counts.conservativeResize(2, 4);
    CHECK_THROWS_WITH_AS(infer_theta(state, other),
                         doctest::Contains("does not match the model vocabulary"),
                         ValidationError);
  }
}

TEST_CASE("classification on separable features") {
  // one-hot thetas: class = argmax coordinate
  const int per_class = 10;
  Eigen::MatrixXd train(2 * per_class, 3);
  std::vector<int> labels;
  for (int i = 0; i < 2 * per_class; ++i) {
    const int c = i % 2;
    train.row(i).setConstant(0.05);
    train(i, c) = 0.9;
    labels.push_back(c);
  }
  CHECK(eval_classification(train, labels, train, labels, ClassifierMode::Intra) ==
        doctest::Approx(1.0));

  SUBCASE("three classes") {
    Eigen::MatrixXd t3(9, 3);
    std::vector<int> l3;
    for (int i = 0; i < 9; ++i) {
      t3.row(i).setConstant(0.05);
      t3(i, i % 3) = 0.9;
      l3.push_back(i % 3);
    }
    CHECK(eval_classification(t3, l3, t3, l3, ClassifierMode::Cross) ==
          doctest::Approx(1.0));
  }
  SUBCASE("deterministic given the seed") {
    auto rng = rng_for(99);
    Eigen::MatrixXd noisy(20, 3);
    std::vector<int> nl;
    for (int i = 0; i < 20; ++i) {
      for (int j = 0; j < 3; ++j) noisy(i, j) = uniform01(rng);
      nl.push_back(static_cast<int>(rng() % 2));
    }
    const double a = eval_classification(noisy, nl, train, labels,
                                         ClassifierMode::Intra, 5);
    const double b = eval_classification(noisy, nl, train, labels,
                                         ClassifierMode::Intra, 5);
    CHECK(a == b);
  }
  SUBCASE("single training class is rejected") {
    const std::vector<int> ones(static_cast<std::size_t>(train.rows()), 1);
    CHECK_THROWS_WITH_AS(
        eval_classification(train, ones, train, ones, ClassifierMode::Intra),
        doctest::Contains("single class"), ValidationError);
  }
  SUBCASE("shape validation") {
    std::vector<int> short_labels(labels.begin(), labels.end() - 1);
    CHECK_THROWS_AS(eval_classification(train, short_labels, train, labels,
                                        ClassifierMode::Intra),
                    ValidationError);
    Eigen::MatrixXd narrow = train.leftCols(2);
    CHECK_THROWS_AS(eval_classification(train, labels, narrow, labels,
                                        ClassifierMode::Intra),
                    ValidationError);
    Eigen::MatrixXd empty(0, 3);
    CHECK_THROWS_AS(eval_classification(train, labels, empty, {},
                                        ClassifierMode::Intra),
                    ValidationError);
  }
}

TEST_CASE("reference pair files") {
  testutil::TempDir dir;
  ReferencePairs ref;
  ref.l1_tokens = {{"a", "b"}, {"c"}};
  ref.l2_tokens = {{"x"}, {"y", "z"}};

  const auto path = dir.file("ref.jsonl");
  save_reference_pairs(ref, path);
  const ReferencePairs back = load_reference_pairs(path);
  CHECK(back.l1_tokens == ref.l1_tokens);
  CHECK(back.l2_tokens == ref.l2_tokens);

  SUBCASE("malformed line is reported with its number") {
    const auto bad = testutil::write_file(
        dir, "bad.jsonl",
        "{\"l1_tokens\": [\"a\"], \"l2_tokens\": [\"x\"]}\nnot json\n");
    CHECK_THROWS_WITH_AS(load_reference_pairs(bad), doctest::Contains(":2:"),
                         ValidationError);
  }
  SUBCASE("missing side") {
    const auto bad = testutil::write_file(dir, "missing.jsonl",
                                          "{\"l1_tokens\": [\"a\"]}\n");
    CHECK_THROWS_AS(load_reference_pairs(bad), ValidationError);
  }
  SUBCASE("empty token list") {
    const auto bad = testutil::write_file(
        dir, "empty.jsonl", "{\"l1_tokens\": [], \"l2_tokens\": [\"x\"]}\n");
    CHECK_THROWS_WITH_AS(load_reference_pairs(bad), doctest::Contains("empty"),
                         ValidationError);
  }
  SUBCASE("no pairs at all") {
    const auto bad = testutil::write_file(dir, "none.jsonl", "\n");
    CHECK_THROWS_WITH_AS(load_reference_pairs(bad),
                         doctest::Contains("no reference pairs"), ValidationError);
  }
}

TEST_CASE("topics files") {
  testutil::TempDir dir;
  const TopicSet ts = make_topics(2, {{"a", "b"}, {"c", "d"}},
                                  {{"p", "q"}, {"r", "s"}});
  const auto path = dir.file("topics.json");
  save_topics(ts, path);
  const TopicSet back = load_topics(path);
  CHECK(back.topics == 2);
  CHECK(back.top_l == 2);
  CHECK(back.words[0] == ts.words[0]);
  CHECK(back.words[1] == ts.words[1]);

  SUBCASE("malformed json") {
    const auto bad = testutil::write_file(dir, "bad.json", "{{{");
    CHECK_THROWS_WITH_AS(load_topics(bad), doctest::Contains("malformed"),
                         ValidationError);
  }
  SUBCASE("schema violations") {
    const auto bad = testutil::write_file(dir, "schema.json", "{\"topics\": 2}");
    CHECK_THROWS_WITH_AS(load_topics(bad), doctest::Contains("bad topics file"),
                         ValidationError);
  }
  SUBCASE("inconsistent list sizes fail validation") {
    nlohmann::json doc;
    doc["topics"] = 2;
    doc["top_l"] = 2;
    doc["l1"] = {{"a", "b"}};
    doc["l2"] = {{"p", "q"}, {"r", "s"}};
    const auto bad = testutil::write_file(dir, "sizes.json", doc.dump());
    CHECK_THROWS_AS(load_topics(bad), ValidationError);
  }
}

TEST_CASE("metric report serialization") {
  testutil::TempDir dir;
  MetricReport report;
  report.cnpmi = 0.076;
  report.tu_l1 = 0.99;
  report.tu_l2 = 0.97;
  report.tu = 0.98;
  report.tq = 0.074;
  report.cnpmi_per_topic = {0.05, 0.10};
  report.tu_per_topic[0] = {1.0, 0.98};
  report.tu_per_topic[1] = {0.97, 0.97};
  report.checkpoint_hash = 0xabcd;
  report.reference_hash = 0x1234;

  const auto path = dir.file("metrics.json");
  save_metric_report(report, path);

  std::ifstream in(path);
  nlohmann::json doc;
  in >> doc;
  CHECK(doc.at("cnpmi") == doctest::Approx(0.076));
  CHECK(doc.at("tu") == doctest::Approx(0.98));
  CHECK(doc.at("tq") == doctest::Approx(0.074));
  CHECK(doc.at("cnpmi_per_topic").size() == 2);
  CHECK(doc.at("tu_per_topic_l1").size() == 2);
  CHECK(doc.at("checkpoint_hash") == "0xabcd");
  CHECK(doc.at("reference_hash") == "0x1234");
}
